"""Templated sentence/answer/question triples whose question type follows from the answer.

Each sentence is ``<name> <verb> the <adj> <noun>`` followed by a random
subset of adjuncts (year, place, means, cause, price).  The answer span picks
one constituent and the question is built from the matching template, so the
question type is recoverable from the span's words, features and context.

With ``alt_prob > 0`` a question may instead open with an alternative phrasing
("in what year" for a year, "which person" for a name).  The choice is random
and invisible in the source, so the opener is correlated with the answer but
not determined by it.
"""

from __future__ import annotations

from typing import Dict, List, Optional

import numpy as np

from .corpus import SQUAD_TYPE_PROPORTIONS, QuestionType, Triple, heuristic_tag

NAMES = [
    "Alice", "Bruno", "Chen", "Dmitri", "Elena", "Farid", "Greta", "Hiro", "Ines", "Jonas",
    "Kofi", "Lena", "Mateo", "Nadia", "Omar", "Priya", "Quinn", "Rosa", "Sven", "Tariq",
    "Uma", "Viktor", "Wen", "Ximena", "Yusuf", "Zora",
]
VERBS = ["built", "sold", "painted", "discovered", "repaired", "designed", "bought", "studied",
         "founded", "visited", "restored", "measured"]
NOUNS = ["bridge", "museum", "engine", "library", "telescope", "garden", "ship", "school",
         "tower", "clock", "mill", "harbor", "chapel", "railway"]
ADJECTIVES = ["red", "old", "famous", "small", "northern", "wooden", "ancient", "modern"]
PLACES = ["Paris", "Lagos", "Oslo", "Lima", "Cairo", "Kyoto", "Quebec", "Dublin", "Hanoi",
          "Perth", "Bergen", "Tunis"]
MEANS = ["hand", "train", "ship", "mail", "machine", "force"]
CAUSES = ["war", "flood", "storm", "drought", "strike", "fire"]

_ADJUNCTS = ("year", "place", "means", "cause", "price")
_TYPE_ADJUNCT = {
    QuestionType.WHEN: "year",
    QuestionType.WHERE: "place",
    QuestionType.HOW: "means",
    QuestionType.WHY: "cause",
    QuestionType.OTHERS: "price",
}


def _adjunct_words(kind: str, rng: np.random.Generator) -> List[str]:
    if kind == "year":
        return ["in", str(int(rng.integers(1850, 2020)))]
    if kind == "place":
        return ["at", str(rng.choice(PLACES))]
    if kind == "means":
        return ["by", str(rng.choice(MEANS))]
    if kind == "cause":
        return ["because", "of", "the", str(rng.choice(CAUSES))]
    return ["for", str(int(rng.integers(10, 1000))), "dollars"]


# alternative openers; the gold type is re-derived from the first word
_ALT_OPENERS = {
    QuestionType.WHEN: ["in", "what", "year"],
    QuestionType.WHERE: ["in", "which", "city"],
    QuestionType.HOW: ["by", "what", "means"],
    QuestionType.WHY: ["for", "what", "reason"],
    QuestionType.OTHERS: ["how", "much"],
}


def make_triple(qtype: QuestionType, rng: np.random.Generator, extra_adjunct_prob: float = 0.4,
                alt_prob: float = 0.0) -> Triple:
    """One triple whose answer span is chosen for ``qtype``.

    With probability ``alt_prob`` the question uses an alternative opener, so
    its labelled type may differ from ``qtype``.
    """
    name = str(rng.choice(NAMES))
    verb = str(rng.choice(VERBS))
    adj = str(rng.choice(ADJECTIVES))
    noun = str(rng.choice(NOUNS))
    words = [name, verb, "the", adj, noun]
    spans: Dict[str, tuple] = {}
    needed = _TYPE_ADJUNCT.get(qtype)
    for kind in _ADJUNCTS:
        if kind == needed or rng.random() < extra_adjunct_prob:
            phrase = _adjunct_words(kind, rng)
            spans[kind] = (len(words), phrase)
            words.extend(phrase)
    words.append(".")

    alt = alt_prob > 0 and rng.random() < alt_prob
    if qtype is QuestionType.WHO:
        start, length = 0, 1
        question = (["which", "person"] if alt else ["who"]) + [verb, "the", adj, noun, "?"]
    elif qtype is QuestionType.WHAT:
        start, length = 2, 3
        question = (["which", "thing"] if alt else ["what"]) + ["did", name, verb, "?"]
    elif qtype is QuestionType.WHICH:
        start, length = 3, 1
        question = (["what", "kind", "of"] if alt else ["which"]) + [noun, "did", name, verb, "?"]
    else:
        pos, phrase = spans[needed]
        if qtype is QuestionType.WHEN:
            start, length = pos + 1, 1
        elif qtype is QuestionType.WHERE:
            start, length = pos + 1, 1
        elif qtype is QuestionType.HOW:
            start, length = pos, 2
        elif qtype is QuestionType.WHY:
            start, length = pos, len(phrase)
        else:
            start, length = pos + 1, 2
        if alt:
            opener = _ALT_OPENERS[qtype]
        else:
            opener = ["for", "how", "much"] if qtype is QuestionType.OTHERS else [qtype.word]
        question = opener + ["did", name, verb, "the", noun, "?"]
    return Triple(heuristic_tag(words), start, length, question)


def make_corpus(n: int, seed: int, type_weights: Optional[Dict[QuestionType, float]] = None,
                stratified: bool = False, alt_prob: float = 0.0) -> List[Triple]:
    """``n`` triples; answer kinds drawn from ``type_weights`` (SQuAD proportions by
    default) or cycled evenly when ``stratified``."""
    rng = np.random.default_rng(seed)
    weights = type_weights or SQUAD_TYPE_PROPORTIONS
    kinds = list(QuestionType)
    p = np.array([weights.get(k, 0.0) for k in kinds], dtype=np.float64)
    p = p / p.sum()
    out = []
    for i in range(n):
        qtype = kinds[i % len(kinds)] if stratified else kinds[int(rng.choice(len(kinds), p=p))]
        out.append(make_triple(qtype, rng, alt_prob=alt_prob))
    return out
