"""Parameter layout, initialisation and padded batch assembly."""

from __future__ import annotations

import hashlib
import json
from collections import OrderedDict
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import numgrad as ng
from .config import RunConfig
from .corpus import (
    BOS_ID,
    CASE_CLASSES,
    EOS_ID,
    PAD_ID,
    UNK_ID,
    QuestionType,
    TagSet,
    Triple,
    Vocabulary,
)

NUM_TYPES = len(QuestionType)
ANSWER_O, ANSWER_B, ANSWER_I = 0, 1, 2


@dataclass(frozen=True)
class ModelDims:
    word_dim: int
    feat_dim: int
    hidden_dim: int
    num_layers: int
    vocab_size: int
    pos_size: int
    ner_size: int
    use_answer_hidden_states: bool = True

    @classmethod
    def from_config(cls, cfg: RunConfig, vocab: Vocabulary, pos: TagSet, ner: TagSet) -> "ModelDims":
        return cls(
            cfg.word_dim, cfg.feat_dim, cfg.hidden_dim, cfg.num_layers,
            len(vocab), len(pos), len(ner), cfg.use_answer_hidden_states,
        )

    @property
    def input_dim(self) -> int:
        # word + answer position + POS + NER + case
        return self.word_dim + 4 * self.feat_dim

    @property
    def lexical_dim(self) -> int:
        return 3 * self.feat_dim

    def fingerprint(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def shapes(self) -> "OrderedDict[str, tuple]":
        H, wd, fd = self.hidden_dim, self.word_dim, self.feat_dim
        half = H // 2
        s: "OrderedDict[str, tuple]" = OrderedDict()
        s["emb.word"] = (self.vocab_size, wd)
        s["emb.answer"] = (3, fd)
        s["emb.pos"] = (self.pos_size, fd)
        s["emb.ner"] = (self.ner_size, fd)
        s["emb.case"] = (len(CASE_CLASSES), fd)
        for layer in range(self.num_layers):
            d_in = self.input_dim if layer == 0 else H
            for direction in ("fwd", "bwd"):
                s[f"enc.{layer}.{direction}.W"] = (d_in + half, 4 * half)
                s[f"enc.{layer}.{direction}.b"] = (4 * half,)
        type_in = (H if self.use_answer_hidden_states else self.input_dim) + self.lexical_dim
        s["type.W"] = (type_in + H, 4 * H)
        s["type.b"] = (4 * H,)
        s["type.Wq"] = (H, NUM_TYPES)
        s["dec.init.W"] = (H, H)
        s["dec.init.b"] = (H,)
        s["dec.W"] = (wd + H + H, 4 * H)
        s["dec.b"] = (4 * H,)
        s["att.Ws"] = (H, H)
        s["att.Wh"] = (H, H)
        s["att.v"] = (H, 1)
        s["out.V1"] = (2 * H, H)
        s["out.b1"] = (H,)
        s["out.V2"] = (H, self.vocab_size)
        s["out.b2"] = (self.vocab_size,)
        s["gate.w"] = (2 * H + wd, 1)
        s["gate.b"] = (1,)
        return s


class ModelParams:
    """Named learnable tensors; each entry is a gradient-tracking :class:`numgrad.Node`."""

    def __init__(self, dims: ModelDims, arrays: Dict[str, np.ndarray]):
        self.dims = dims
        expected = dims.shapes()
        if set(arrays) != set(expected):
            missing = sorted(set(expected) - set(arrays))
            extra = sorted(set(arrays) - set(expected))
            raise ValueError(f"parameter names do not match model: missing {missing}, unexpected {extra}")
        self.nodes: "OrderedDict[str, ng.Node]" = OrderedDict()
        for name, shape in expected.items():
            arr = np.asarray(arrays[name], dtype=np.float64)
            if arr.shape != shape:
                raise ValueError(f"parameter {name}: shape {arr.shape} does not match expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"parameter {name} has non-finite entries")
            self.nodes[name] = ng.parameter(arr.copy(), name=name)

    def __getitem__(self, name: str) -> ng.Node:
        return self.nodes[name]

    def __iter__(self):
        return iter(self.nodes.values())

    def names(self) -> List[str]:
        return list(self.nodes)

    def arrays(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((k, n.value.copy()) for k, n in self.nodes.items())

    def lstm(self, prefix: str) -> ng.LSTMWeights:
        return ng.LSTMWeights(self.nodes[prefix + ".W"], self.nodes[prefix + ".b"])

    def zero_grad(self) -> None:
        for n in self.nodes.values():
            n.zero_grad()

    def count(self) -> int:
        return int(sum(n.value.size for n in self.nodes.values()))

    @classmethod
    def initialize(cls, dims: ModelDims, rng: np.random.Generator, init_scale: float = 0.08,
                   embed_scale: float = 0.1, pretrained: Optional[dict] = None) -> "ModelParams":
        arrays = OrderedDict()
        for name, shape in dims.shapes().items():
            if name.startswith("emb."):
                arrays[name] = rng.uniform(-embed_scale, embed_scale, size=shape)
            elif len(shape) == 1:
                arrays[name] = np.zeros(shape)
            else:
                arrays[name] = rng.uniform(-init_scale, init_scale, size=shape)
        if pretrained:
            for idx, vec in pretrained.items():
                arrays["emb.word"][idx] = vec
        return cls(dims, arrays)


# --------------------------------------------------------------------------
# batches


@dataclass
class Batch:
    """Padded, id-mapped view of a list of triples."""

    src_ids: np.ndarray      # [B, T] vocabulary ids (UNK for OOV)
    src_ext: np.ndarray      # [B, T] extended ids (OOV source words get V + k)
    pos_ids: np.ndarray
    ner_ids: np.ndarray
    case_ids: np.ndarray
    answer_tags: np.ndarray  # [B, T] O/B/I
    src_mask: np.ndarray     # [B, T] bool
    lengths: np.ndarray      # [B]
    answer_start: np.ndarray
    answer_len: np.ndarray
    oov_words: List[List[str]]
    ext_size: int
    gold_types: np.ndarray   # [B]
    first_ids: Optional[np.ndarray] = None   # [B] step-1 decoder input
    injected: Optional[np.ndarray] = None    # [B] bool, first input is a question word
    tgt_ext: Optional[np.ndarray] = None     # [B, K] extended target ids
    tgt_mask: Optional[np.ndarray] = None    # [B, K] bool

    @property
    def size(self) -> int:
        return self.src_ids.shape[0]


def question_word_id(qtype: QuestionType, vocab: Vocabulary) -> int:
    """Vocabulary id of the type's question word, or BOS for Others / missing words."""
    word = QuestionType(qtype).word
    if word is None or word not in vocab:
        return BOS_ID
    return vocab.id_of[word]


def to_decoder_input(ext_ids, vocab_size: int) -> np.ndarray:
    ext_ids = np.asarray(ext_ids, dtype=np.int64)
    return np.where(ext_ids >= vocab_size, UNK_ID, ext_ids)


def make_batch(triples: Sequence[Triple], vocab: Vocabulary, pos: TagSet, ner: TagSet,
               with_targets: bool = False, first_token: str = "gold_type",
               max_question_len: Optional[int] = None) -> Batch:
    B = len(triples)
    T = max(len(t.sentence) for t in triples)
    V = len(vocab)
    shape = (B, T)
    src_ids = np.full(shape, PAD_ID, dtype=np.int64)
    src_ext = np.full(shape, PAD_ID, dtype=np.int64)
    pos_ids = np.zeros(shape, dtype=np.int64)
    ner_ids = np.zeros(shape, dtype=np.int64)
    case_ids = np.zeros(shape, dtype=np.int64)
    answer_tags = np.full(shape, ANSWER_O, dtype=np.int64)
    src_mask = np.zeros(shape, dtype=bool)
    oov_words: List[List[str]] = []
    case_index = {c: i for i, c in enumerate(CASE_CLASSES)}
    for b, t in enumerate(triples):
        oov: List[str] = []
        for i, tok in enumerate(t.sentence):
            wid = vocab.lookup(tok.surface)
            src_ids[b, i] = wid
            if tok.surface in vocab:
                src_ext[b, i] = wid
            else:
                if tok.surface not in oov:
                    oov.append(tok.surface)
                src_ext[b, i] = V + oov.index(tok.surface)
            pos_ids[b, i] = pos.lookup(tok.pos)
            ner_ids[b, i] = ner.lookup(tok.ner)
            case_ids[b, i] = case_index[tok.case]
            src_mask[b, i] = True
        answer_tags[b, t.answer_start] = ANSWER_B
        answer_tags[b, t.answer_start + 1:t.answer_start + t.answer_len] = ANSWER_I
        oov_words.append(oov)
    batch = Batch(
        src_ids, src_ext, pos_ids, ner_ids, case_ids, answer_tags, src_mask,
        lengths=np.array([len(t.sentence) for t in triples], dtype=np.int64),
        answer_start=np.array([t.answer_start for t in triples], dtype=np.int64),
        answer_len=np.array([t.answer_len for t in triples], dtype=np.int64),
        oov_words=oov_words,
        ext_size=V + max(len(o) for o in oov_words),
        gold_types=np.array([int(t.qtype) for t in triples], dtype=np.int64),
    )
    if with_targets:
        _attach_targets(batch, triples, vocab, first_token, max_question_len)
    return batch


TRAINING_FIRST_TOKENS = ("gold_type", "gold_first_word", "plain_bos")


def _attach_targets(batch: Batch, triples, vocab: Vocabulary, first_token: str, max_question_len):
    if first_token not in TRAINING_FIRST_TOKENS:
        raise ValueError(f"first_token must be one of {TRAINING_FIRST_TOKENS}, got {first_token!r}")
    firsts, injected, seqs = [], [], []
    for b, t in enumerate(triples):
        if first_token == "gold_type":
            first = question_word_id(t.qtype, vocab)
        elif first_token == "gold_first_word":
            first = vocab.lookup(t.question[0])
        else:
            first = BOS_ID
        rest = list(t.question[1:] if first != BOS_ID else t.question)
        if max_question_len is not None:
            rest = rest[:max_question_len]
        ids = [target_id(w, vocab, batch.oov_words[b]) for w in rest] + [EOS_ID]
        firsts.append(first)
        injected.append(first != BOS_ID)
        seqs.append(ids)
    K = max(len(s) for s in seqs)
    tgt = np.full((batch.size, K), PAD_ID, dtype=np.int64)
    mask = np.zeros((batch.size, K), dtype=bool)
    for b, s in enumerate(seqs):
        tgt[b, :len(s)] = s
        mask[b, :len(s)] = True
    batch.first_ids = np.array(firsts, dtype=np.int64)
    batch.injected = np.array(injected, dtype=bool)
    batch.tgt_ext = tgt
    batch.tgt_mask = mask


def target_id(word: str, vocab: Vocabulary, oov: Sequence[str]) -> int:
    """Vocabulary id if known, else the copy id of a matching source word, else UNK."""
    if word in vocab:
        return vocab.id_of[word]
    if word in oov:
        return len(vocab) + list(oov).index(word)
    return UNK_ID
