"""Run configuration: flat ``key = value`` files with typed fields."""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, fields
from pathlib import Path

FIRST_TOKEN_MODES = ("predicted", "gold_type", "gold_first_word", "plain_bos")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # model
    word_dim: int = 64
    feat_dim: int = 8
    hidden_dim: int = 32
    num_layers: int = 2
    vocab_size: int = 2000
    use_answer_hidden_states: bool = True
    replace_bos: bool = True
    oracle_first_word: bool = False
    # data
    max_source_len: int = 100
    max_question_len: int = 30
    lowercase: bool = True
    pretrained_embeddings: str = ""
    # optimisation
    optimizer: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    clip_norm: float = 5.0
    batch_size: int = 32
    epochs: int = 10
    init_scale: float = 0.08
    embed_init_scale: float = 0.1
    seed: int = 1
    # evaluation / checkpointing
    eval_interval: int = 100
    dev_beam_size: int = 1
    average_k: int = 5
    # inference
    mode: str = "predicted"
    beam_size: int = 12
    max_len: int = 30

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if f.type in ("int", "float") and f.name not in ("seed",) and v <= 0 and f.name != "lr":
                raise ConfigError(f"{f.name} must be positive, got {v}")
        if self.lr < 0:
            raise ConfigError(f"lr must be nonnegative, got {self.lr}")
        if self.hidden_dim % 2:
            raise ConfigError(f"hidden_dim must be even (split over two directions), got {self.hidden_dim}")
        if self.vocab_size <= 4:
            raise ConfigError("vocab_size must exceed the 4 special symbols")
        if self.mode not in FIRST_TOKEN_MODES:
            raise ConfigError(f"mode must be one of {FIRST_TOKEN_MODES}, got {self.mode!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")

    @classmethod
    def paper_scale(cls, **overrides) -> "RunConfig":
        """Full-size hyperparameters (300-d words, 32-d features, 512 hidden, beam 12)."""
        base = dict(word_dim=300, feat_dim=32, hidden_dim=512, num_layers=2, vocab_size=20000, beam_size=12)
        base.update(overrides)
        return cls(**base)

    # -- serialisation ------------------------------------------------------

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, **overrides) -> "RunConfig":
        values = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"config line {lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key] = value
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_mapping(values)

    @classmethod
    def from_mapping(cls, values: dict) -> "RunConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, value in values.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(known[key].type, key, value)
        return cls(**kwargs)

    @classmethod
    def load(cls, path, **overrides) -> "RunConfig":
        return cls.from_text(Path(path).read_text(encoding="utf-8"), **overrides)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    @property
    def training_first_token(self) -> str:
        """Step-1 decoder input used under teacher forcing."""
        if not self.replace_bos:
            return "plain_bos"
        return "gold_first_word" if self.oracle_first_word else "gold_type"

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]


def _coerce(type_name: str, key: str, value):
    if not isinstance(value, str):
        return value
    try:
        if type_name == "bool":
            low = value.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(value)
            return low in ("true", "1", "yes")
        if type_name == "int":
            return int(value)
        if type_name == "float":
            return float(value)
    except ValueError:
        raise ConfigError(f"config key {key!r}: cannot parse {value!r} as {type_name}") from None
    return value
