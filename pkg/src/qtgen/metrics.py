"""Corpus BLEU, beginning-question-word accuracy and type accuracy."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Sequence, Tuple

from .corpus import QUESTION_WORDS


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def modified_precision_counts(hyps, refs, n: int) -> Tuple[int, int]:
    """Pooled (clipped matches, candidate n-grams) over the corpus."""
    matched = total = 0
    for hyp, ref in zip(hyps, refs):
        h = ngrams(hyp, n)
        r = ngrams(ref, n)
        matched += sum(min(c, r[g]) for g, c in h.items())
        total += sum(h.values())
    return matched, total


def corpus_bleu_n(hyps: Sequence[Sequence[str]], refs: Sequence[Sequence[str]], n: int = 4) -> float:
    """Unsmoothed single-reference corpus BLEU-n on the 0..100 scale."""
    if len(hyps) != len(refs):
        raise ValueError(f"{len(hyps)} hypotheses vs {len(refs)} references")
    if not 1 <= n <= 4:
        raise ValueError(f"n must be in 1..4, got {n}")
    if any(len(r) == 0 for r in refs):
        raise ValueError("references must be nonempty")
    log_p = 0.0
    for k in range(1, n + 1):
        matched, total = modified_precision_counts(hyps, refs, k)
        if matched == 0:
            return 0.0
        log_p += math.log(matched / total) / n
    c = sum(len(h) for h in hyps)
    r = sum(len(x) for x in refs)
    bp = math.exp(min(0.0, 1.0 - r / c))
    return 100.0 * bp * math.exp(log_p)


def bqwa(hyps: Sequence[Sequence[str]], refs: Sequence[Sequence[str]]):
    """Fraction of question-word-initial references whose hypothesis opens with the same word.

    Returns ``(ratio, breakdown)`` with breakdown ``{word: (correct, total, ratio)}``.
    """
    if len(hyps) != len(refs):
        raise ValueError(f"{len(hyps)} hypotheses vs {len(refs)} references")
    correct: Counter = Counter()
    total: Counter = Counter()
    for hyp, ref in zip(hyps, refs):
        if not ref:
            continue
        word = ref[0].lower()
        if word not in QUESTION_WORDS:
            continue
        total[word] += 1
        if hyp and hyp[0].lower() == word:
            correct[word] += 1
    breakdown = {
        w: (correct[w], total[w], correct[w] / total[w]) for w in QUESTION_WORDS if total[w]
    }
    denom = sum(total.values())
    ratio = sum(correct.values()) / denom if denom else 0.0
    return ratio, breakdown


def type_accuracy(predictions: Sequence[int], golds: Sequence[int]) -> float:
    if len(predictions) != len(golds):
        raise ValueError(f"{len(predictions)} predictions vs {len(golds)} golds")
    if not golds:
        return 0.0
    return sum(int(p) == int(g) for p, g in zip(predictions, golds)) / len(golds)


@dataclass
class EvalReport:
    bleu: List[float]
    bqwa: float
    per_word_accuracy: Dict[str, Tuple[int, int, float]]
    type_accuracy: float = float("nan")
    count: int = 0
    mode: str = ""
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        d = asdict(self)
        d["per_word_accuracy"] = {
            w: {"correct": c, "total": t, "ratio": r} for w, (c, t, r) in self.per_word_accuracy.items()
        }
        if math.isnan(self.type_accuracy):
            d["type_accuracy"] = None
        return d

    def table(self) -> str:
        lines = [
            f"mode: {self.mode or '-'}    examples: {self.count}",
            "BLEU-1  BLEU-2  BLEU-3  BLEU-4",
            "  ".join(f"{b:6.2f}" for b in self.bleu),
            f"BQWA: {100 * self.bqwa:.2f}%",
        ]
        if not math.isnan(self.type_accuracy):
            lines.append(f"type accuracy: {100 * self.type_accuracy:.2f}%")
        lines.append("question word   correct   total   accuracy")
        for w in QUESTION_WORDS:
            if w in self.per_word_accuracy:
                c, t, r = self.per_word_accuracy[w]
                lines.append(f"{w:<14}{c:>9}{t:>8}{100 * r:>10.2f}%")
        return "\n".join(lines) + "\n"


def evaluate(hyps, refs, predicted_types=None, gold_types=None, mode: str = "") -> EvalReport:
    ratio, breakdown = bqwa(hyps, refs)
    tacc = float("nan")
    if predicted_types is not None and gold_types is not None:
        tacc = type_accuracy(predicted_types, gold_types)
    return EvalReport(
        bleu=[corpus_bleu_n(hyps, refs, n) for n in range(1, 5)],
        bqwa=ratio,
        per_word_accuracy=breakdown,
        type_accuracy=tacc,
        count=len(hyps),
        mode=mode,
    )
