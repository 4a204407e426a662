"""Command-line entry point.

Subcommands::

    qtgen synth               write a templated corpus as JSONL
    qtgen preprocess          tag, lowercase and truncate triples; build vocab + tag sets
    qtgen train               train a model into a run directory
    qtgen generate            decode questions in a chosen first-token mode
    qtgen evaluate            BLEU-1..4, BQWA and per-word accuracy
    qtgen average-checkpoints elementwise mean of checkpoint files
    qtgen gradcheck           finite-difference sweep on a bundled toy problem

Run directories live under ``$QTGEN_RUN_ROOT`` (default ``./runs``).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path
from typing import List, Optional, Sequence

from .checkpoint import (
    CheckpointError,
    average_checkpoints,
    load_checkpoint,
    nearest_checkpoints,
    save_checkpoint,
)
from .config import FIRST_TOKEN_MODES, ConfigError, RunConfig
from .corpus import (
    CorpusError,
    TagSet,
    Token,
    Triple,
    Vocabulary,
    build_vocabulary,
    read_triples,
    write_triples,
)
from .decode import DecodingError, generate
from .metrics import evaluate
from .numgrad import ShapeError
from .synthetic import make_corpus
from .training import DataSpec, TrainingError, train

RUN_ROOT_ENV = "QTGEN_RUN_ROOT"

# exit status per failure class
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_MISSING = 4
EXIT_DATA = 5
EXIT_NAN = 6
EXIT_SHAPE = 7


class CliError(Exception):
    def __init__(self, message: str, status: int):
        super().__init__(message)
        self.status = status


# --------------------------------------------------------------------------
# data directory helpers


def lowercase_triple(t: Triple) -> Triple:
    # case features were computed from the original surface and are kept
    sentence = [Token(k.surface.lower(), k.pos, k.ner, k.case) for k in t.sentence]
    return Triple(sentence, t.answer_start, t.answer_len, [w.lower() for w in t.question])


def truncate_triple(t: Triple, max_len: int) -> Optional[Triple]:
    """Cut the sentence to ``max_len`` tokens; ``None`` if the answer would be cut."""
    if len(t.sentence) <= max_len:
        return t
    if t.answer_start + t.answer_len > max_len:
        return None
    return Triple(list(t.sentence[:max_len]), t.answer_start, t.answer_len, t.question)


def load_data_spec(data_dir) -> DataSpec:
    d = Path(data_dir)
    return DataSpec(
        Vocabulary.load(_existing(d / "vocab.txt")),
        TagSet.load(_existing(d / "pos.txt")),
        TagSet.load(_existing(d / "ner.txt")),
    )


def _existing(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise CliError(f"file not found: {p}", EXIT_MISSING)
    return p


def _read(path) -> List[Triple]:
    return read_triples(_existing(path))


def run_root() -> Path:
    return Path(os.environ.get(RUN_ROOT_ENV, "runs"))


def _parse_overrides(pairs: Sequence[str]) -> dict:
    out = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise CliError(f"--set expects key=value, got {pair!r}", EXIT_CONFIG)
        k, v = pair.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _config(path, overrides) -> RunConfig:
    if path:
        return RunConfig.load(_existing(path), **overrides)
    return RunConfig.from_mapping(overrides)


# --------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    triples = make_corpus(args.n, seed=args.seed, stratified=args.stratified)
    write_triples(triples, args.output)
    print(f"wrote {len(triples)} triples to {args.output}")
    return 0


def cmd_preprocess(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    splits = {"train": args.train, "dev": args.dev, "test": args.test}
    processed = {}
    for name, path in splits.items():
        if not path:
            continue
        kept, dropped = [], 0
        for t in _read(path):
            if args.lowercase:
                t = lowercase_triple(t)
            t2 = truncate_triple(t, args.max_source_len)
            if t2 is None:
                dropped += 1
            else:
                kept.append(t2)
        processed[name] = kept
        write_triples(kept, out / f"{name}.jsonl")
        print(f"{name}: {len(kept)} triples ({dropped} dropped: answer beyond max_source_len)")
    train_set = processed["train"]
    if not train_set:
        raise CliError("training split is empty", EXIT_DATA)
    vocab = build_vocabulary(train_set, args.vocab_size)
    vocab.save(out / "vocab.txt")
    TagSet.from_triples(train_set, "pos").save(out / "pos.txt")
    TagSet.from_triples(train_set, "ner").save(out / "ner.txt")
    print(f"vocabulary: {len(vocab)} words -> {out}")
    return 0


def cmd_train(args) -> int:
    cfg = _config(args.config, _parse_overrides(args.set))
    data_dir = Path(args.data)
    data = load_data_spec(data_dir)
    train_set = _read(data_dir / "train.jsonl")
    dev_path = data_dir / "dev.jsonl"
    dev_set = read_triples(dev_path) if dev_path.exists() else []

    run_dir = Path(args.run_dir) if args.run_dir else run_root() / (args.name or cfg.fingerprint())
    ckpt_dir = run_dir / "checkpoints"
    gen_dir = run_dir / "generations"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    gen_dir.mkdir(exist_ok=True)
    cfg.save(run_dir / "config.txt")

    log_path = run_dir / "train.log"
    with open(log_path, "w", encoding="utf-8") as log_fh:
        def log(line: str) -> None:
            log_fh.write(line + "\n")
            log_fh.flush()
            if not args.quiet:
                print(line)

        def keep(ckpt) -> None:
            save_checkpoint(ckpt, ckpt_dir / f"step_{ckpt.step:08d}.ckpt")

        start = time.time()
        ckpts = train(cfg, train_set, dev_set, data, max_steps=args.max_steps, on_checkpoint=keep, log=log)
        chosen = nearest_checkpoints(ckpts, cfg.average_k)
        final = average_checkpoints(chosen)
        save_checkpoint(final, run_dir / "model.ckpt")
        log(f"averaged steps {[c.step for c in chosen]} -> {run_dir / 'model.ckpt'} "
            f"({time.time() - start:.1f}s)")
    if dev_set:
        _write_generations(final.model(), cfg, data, dev_set, gen_dir / f"dev.{cfg.mode}.txt", cfg.mode)
    return 0


def _write_generations(params, cfg: RunConfig, data: DataSpec, triples, path, mode: str):
    gens = generate(triples, params, data.vocab, data.pos, data.ner, mode=mode,
                    beam_size=cfg.beam_size, max_len=cfg.max_len,
                    use_answer_hidden_states=params.dims.use_answer_hidden_states)
    path = Path(path)
    path.write_text("".join(" ".join(g.words) + "\n" for g in gens), encoding="utf-8")
    meta = {"mode": mode, "beam_size": cfg.beam_size, "predicted_types": [g.predicted_type for g in gens]}
    Path(str(path) + ".meta.json").write_text(json.dumps(meta, sort_keys=True) + "\n", encoding="utf-8")
    return gens


def cmd_generate(args) -> int:
    ckpt = load_checkpoint(_existing(args.model))
    data = load_data_spec(args.data)
    if ckpt.dims.vocab_size != len(data.vocab):
        raise CliError(
            f"model vocabulary size {ckpt.dims.vocab_size} != data vocabulary size {len(data.vocab)}", EXIT_SHAPE
        )
    triples = _read(args.input)
    cfg = RunConfig(beam_size=args.beam_size, max_len=args.max_len, mode=args.mode)
    _write_generations(ckpt.model(), cfg, data, triples, args.output, args.mode)
    print(f"wrote {len(triples)} questions to {args.output} (mode={args.mode})")
    return 0


def cmd_evaluate(args) -> int:
    hyp_path = _existing(args.hyps)
    hyps = [line.split() for line in hyp_path.read_text(encoding="utf-8").splitlines()]
    refs_triples = _read(args.refs)
    if len(hyps) != len(refs_triples):
        raise CliError(f"{len(hyps)} hypotheses but {len(refs_triples)} references", EXIT_DATA)
    meta_path = Path(str(hyp_path) + ".meta.json")
    meta = json.loads(meta_path.read_text(encoding="utf-8")) if meta_path.exists() else {}
    mode = args.mode or meta.get("mode", "")
    predicted = meta.get("predicted_types")
    golds = [int(t.qtype) for t in refs_triples] if predicted is not None else None
    report = evaluate(hyps, [list(t.question) for t in refs_triples], predicted, golds, mode=mode)
    text = report.table()
    if args.output:
        Path(args.output).write_text(json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n",
                                     encoding="utf-8")
        Path(args.output).with_suffix(".txt").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def cmd_average(args) -> int:
    ckpts = [load_checkpoint(_existing(p)) for p in args.inputs]
    save_checkpoint(average_checkpoints(ckpts), args.output)
    print(f"averaged {len(ckpts)} checkpoints -> {args.output}")
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import run_toy_gradcheck

    start = time.time()
    report = run_toy_gradcheck(args.seed)
    status = "ok" if report.max_rel_error < args.tolerance else "FAILED"
    print(f"max relative error {report.max_rel_error:.3e} at {report.worst_param}{list(report.worst_index)} "
          f"over {report.entries} entries ({time.time() - start:.1f}s) {status}")
    return 0 if status == "ok" else 1


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qtgen", description="Question-type-driven question generation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a templated synthetic corpus")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stratified", action="store_true", help="cycle question types evenly")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="tag/lowercase/truncate triples and build vocab + tag sets")
    p.add_argument("--train", required=True)
    p.add_argument("--dev")
    p.add_argument("--test")
    p.add_argument("--out", required=True, help="output data directory")
    p.add_argument("--vocab-size", type=int, default=2000)
    p.add_argument("--max-source-len", type=int, default=100)
    p.add_argument("--lowercase", action=argparse.BooleanOptionalAction, default=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train a model into a run directory")
    p.add_argument("--data", required=True, help="directory written by preprocess")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config value")
    p.add_argument("--name", help=f"run name under ${RUN_ROOT_ENV} (default: config fingerprint)")
    p.add_argument("--run-dir", help="explicit run directory")
    p.add_argument("--max-steps", type=int)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="decode one question per input triple")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="directory with vocab.txt, pos.txt, ner.txt")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--mode", choices=FIRST_TOKEN_MODES, default="predicted")
    p.add_argument("--beam-size", type=int, default=12)
    p.add_argument("--max-len", type=int, default=30)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="score generated questions against references")
    p.add_argument("--hyps", required=True)
    p.add_argument("--refs", required=True, help="JSONL triples holding the reference questions")
    p.add_argument("--mode", help="mode label (default: read from the generation metadata)")
    p.add_argument("--output", help="JSON report path; a .txt table is written next to it")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("average-checkpoints", help="elementwise mean of checkpoint files")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_average)

    p = sub.add_parser("gradcheck", help="finite-difference check on the bundled toy problem")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        status, msg = exc.status, str(exc)
    except ConfigError as exc:
        status, msg = EXIT_CONFIG, f"bad config: {exc}"
    except FileNotFoundError as exc:
        status, msg = EXIT_MISSING, f"file not found: {exc.filename}"
    except (CorpusError, DecodingError) as exc:
        status, msg = EXIT_DATA, f"bad data: {exc}"
    except TrainingError as exc:
        status, msg = EXIT_NAN, f"training failed: {exc}"
    except (ShapeError, CheckpointError) as exc:
        status, msg = EXIT_SHAPE, f"shape mismatch: {exc}"
    print(f"qtgen: error: {msg}".replace("\n", " "), file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
