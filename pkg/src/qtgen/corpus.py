"""Sentence/answer/question triples, lexical features and vocabularies."""

from __future__ import annotations

import enum
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

PAD, UNK, BOS, EOS = "<pad>", "<unk>", "<s>", "</s>"
SPECIALS = (PAD, UNK, BOS, EOS)
PAD_ID, UNK_ID, BOS_ID, EOS_ID = 0, 1, 2, 3

CASE_CLASSES = ("lower", "capitalized", "upper", "other")
UNK_TAG = "<unk>"


class CorpusError(ValueError):
    """A triple file or triple failed validation."""


class QuestionType(enum.IntEnum):
    WHAT = 0
    WHO = 1
    HOW = 2
    WHEN = 3
    WHICH = 4
    WHERE = 5
    WHY = 6
    OTHERS = 7

    @property
    def word(self) -> Optional[str]:
        """The interrogative that opens questions of this type (None for Others)."""
        return None if self is QuestionType.OTHERS else self.name.lower()


QUESTION_WORDS = tuple(t.word for t in QuestionType if t is not QuestionType.OTHERS)
_TYPE_BY_WORD = {t.word: t for t in QuestionType if t is not QuestionType.OTHERS}

# SQuAD training-split proportions of each type; documentation fixture only.
SQUAD_TYPE_PROPORTIONS = {
    QuestionType.WHAT: 0.4326,
    QuestionType.WHO: 0.0939,
    QuestionType.HOW: 0.0912,
    QuestionType.WHEN: 0.0626,
    QuestionType.WHICH: 0.0478,
    QuestionType.WHERE: 0.0376,
    QuestionType.WHY: 0.0137,
    QuestionType.OTHERS: 0.2183,
}


def label_question_type(question: Sequence[str]) -> QuestionType:
    if not question:
        raise CorpusError("cannot label an empty question")
    return _TYPE_BY_WORD.get(question[0].lower(), QuestionType.OTHERS)


def case_class(word: str) -> str:
    letters = [c for c in word if c.isalpha()]
    if not letters:
        return "other"
    if all(c.islower() for c in letters):
        return "lower"
    if all(c.isupper() for c in letters):
        return "upper" if len(letters) > 1 else "capitalized"
    if word[0].isupper() and all(c.islower() for c in letters[1:]):
        return "capitalized"
    return "other"


@dataclass(frozen=True)
class Token:
    surface: str
    pos: str = UNK_TAG
    ner: str = "O"
    case: str = "lower"

    def __post_init__(self):
        if not self.surface:
            raise CorpusError("token surface must be nonempty")
        if self.case not in CASE_CLASSES:
            raise CorpusError(f"unknown case class {self.case!r}")


@dataclass(frozen=True)
class Triple:
    sentence: tuple
    answer_start: int
    answer_len: int
    question: tuple
    qtype: QuestionType = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "sentence", tuple(self.sentence))
        object.__setattr__(self, "question", tuple(self.question))
        if not self.sentence:
            raise CorpusError("sentence must be nonempty")
        if self.answer_len < 1:
            raise CorpusError(f"answer_len must be >= 1, got {self.answer_len}")
        if self.answer_start < 0 or self.answer_start + self.answer_len > len(self.sentence):
            raise CorpusError(
                f"answer span [{self.answer_start}, {self.answer_start + self.answer_len}) "
                f"outside sentence of length {len(self.sentence)}"
            )
        object.__setattr__(self, "qtype", label_question_type(self.question))

    @property
    def words(self) -> List[str]:
        return [t.surface for t in self.sentence]

    @property
    def answer_words(self) -> List[str]:
        return self.words[self.answer_start:self.answer_start + self.answer_len]


# --------------------------------------------------------------------------
# heuristic lexical tagging

_CLOSED_CLASS = {
    **dict.fromkeys(["the", "a", "an", "this", "that", "these", "those", "every", "each"], "DT"),
    **dict.fromkeys(
        ["in", "on", "at", "by", "for", "with", "from", "of", "to", "into", "during",
         "after", "before", "over", "under", "about", "between", "through", "because"],
        "IN",
    ),
    **dict.fromkeys(["and", "or", "but", "nor", "yet"], "CC"),
    **dict.fromkeys(["he", "she", "it", "they", "we", "i", "you", "him", "her", "them", "us"], "PRP"),
    **dict.fromkeys(["his", "its", "their", "our", "my", "your"], "PRP$"),
    **dict.fromkeys(["is", "are", "was", "were", "be", "been", "being", "am"], "VB"),
    **dict.fromkeys(["do", "does", "did", "has", "have", "had"], "VB"),
    **dict.fromkeys(["can", "could", "will", "would", "shall", "should", "may", "might", "must"], "MD"),
    **dict.fromkeys(["what", "which", "who", "whom", "whose"], "WP"),
    **dict.fromkeys(["how", "when", "where", "why"], "WRB"),
    **dict.fromkeys(["not", "n't", "very", "also", "often", "generally", "usually"], "RB"),
}
_SUFFIX_RULES = (
    ("ing", "VBG"),
    ("ed", "VBD"),
    ("ly", "RB"),
    ("ous", "JJ"),
    ("ful", "JJ"),
    ("ive", "JJ"),
    ("able", "JJ"),
    ("al", "JJ"),
    ("tion", "NN"),
    ("ment", "NN"),
    ("ness", "NN"),
    ("s", "NNS"),
)
_NUMBER_RE = re.compile(r"^[+-]?(\d+([.,:/-]\d+)*%?|\$\d+([.,]\d+)*)$")
_PUNCT_RE = re.compile(r"^\W+$")


def _pos(word: str) -> str:
    low = word.lower()
    if low in _CLOSED_CLASS:
        return _CLOSED_CLASS[low]
    if _NUMBER_RE.match(word):
        return "CD"
    if _PUNCT_RE.match(word):
        return "."
    if word[0].isupper():
        return "NNP"
    for suffix, tag in _SUFFIX_RULES:
        if low.endswith(suffix) and len(low) > len(suffix) + 2:
            return tag
    return "NN"


def heuristic_tag(words: Sequence[str]) -> List[Token]:
    """Rule-based POS, NER and case features for a pre-tokenized sentence."""
    if not words:
        raise CorpusError("cannot tag an empty sentence")
    tokens = []
    for w in words:
        pos = _pos(w)
        if _NUMBER_RE.match(w):
            ner = "NUMBER"
        elif w[0].isupper() and w.lower() not in _CLOSED_CLASS:
            ner = "ENTITY"
        else:
            ner = "O"
        tokens.append(Token(w, pos, ner, case_class(w)))
    return tokens


# --------------------------------------------------------------------------
# vocabulary


class Vocabulary:
    """Bijective word <-> id map; ids 0..3 are the special symbols."""

    def __init__(self, words: Sequence[str]):
        words = list(words)
        if tuple(words[:4]) != SPECIALS:
            raise CorpusError(f"vocabulary must start with {SPECIALS}")
        if len(set(words)) != len(words):
            raise CorpusError("vocabulary contains duplicate words")
        self.word_of = words
        self.id_of = {w: i for i, w in enumerate(words)}

    def __len__(self) -> int:
        return len(self.word_of)

    def __contains__(self, word: str) -> bool:
        return word in self.id_of

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.word_of == other.word_of

    def lookup(self, word: str) -> int:
        return self.id_of.get(word, UNK_ID)

    def save(self, path) -> None:
        Path(path).write_text("".join(w + "\n" for w in self.word_of), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        return cls(Path(path).read_text(encoding="utf-8").splitlines())


def ranked_by_frequency(counts: Counter) -> List[str]:
    """Descending count, ties broken lexicographically."""
    return [w for w, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))]


def build_vocabulary(triples: Iterable[Triple], max_size: int) -> Vocabulary:
    if max_size <= len(SPECIALS):
        raise CorpusError(f"max_size must exceed {len(SPECIALS)}, got {max_size}")
    counts: Counter = Counter()
    for t in triples:
        counts.update(t.words)
        counts.update(t.question)
    if not counts:
        raise CorpusError("cannot build a vocabulary from an empty corpus")
    for s in SPECIALS:
        counts.pop(s, None)
    ranked = ranked_by_frequency(counts)[: max_size - len(SPECIALS)]
    return Vocabulary(list(SPECIALS) + ranked)


class TagSet:
    """Closed tag inventory with a reserved unknown-tag row at id 0."""

    def __init__(self, tags: Sequence[str]):
        tags = [UNK_TAG] + sorted(set(tags) - {UNK_TAG})
        self.tags = tags
        self.id_of = {t: i for i, t in enumerate(tags)}

    def __len__(self) -> int:
        return len(self.tags)

    def __eq__(self, other) -> bool:
        return isinstance(other, TagSet) and self.tags == other.tags

    def lookup(self, tag: str) -> int:
        return self.id_of.get(tag, 0)

    def save(self, path) -> None:
        Path(path).write_text("".join(t + "\n" for t in self.tags), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "TagSet":
        return cls(Path(path).read_text(encoding="utf-8").splitlines())

    @classmethod
    def from_triples(cls, triples: Iterable[Triple], attr: str) -> "TagSet":
        return cls({getattr(tok, attr) for t in triples for tok in t.sentence})


# --------------------------------------------------------------------------
# JSONL triple files


def triple_to_json(t: Triple) -> dict:
    return {
        "sentence": [{"w": k.surface, "pos": k.pos, "ner": k.ner, "case": k.case} for k in t.sentence],
        "answer_start": t.answer_start,
        "answer_len": t.answer_len,
        "question": list(t.question),
    }


def _field(obj: dict, name: str, lineno: int):
    if name not in obj:
        raise CorpusError(f"line {lineno}: missing field {name!r}")
    return obj[name]


def triple_from_json(obj: dict, lineno: int = 0) -> Triple:
    """Parse one record.  Sentence tokens may be tagged objects or bare strings;
    bare strings are tagged heuristically.  Any stored qtype is ignored."""
    if not isinstance(obj, dict):
        raise CorpusError(f"line {lineno}: expected a JSON object")
    raw = _field(obj, "sentence", lineno)
    if isinstance(raw, str):
        raw = raw.split()
    if not isinstance(raw, list) or not raw:
        raise CorpusError(f"line {lineno}: field 'sentence' must be a nonempty list")
    try:
        if all(isinstance(k, str) for k in raw):
            sentence = heuristic_tag(raw)
        else:
            sentence = [
                Token(k["w"], k.get("pos", UNK_TAG), k.get("ner", "O"), k.get("case") or case_class(k["w"]))
                for k in raw
            ]
    except (KeyError, TypeError, CorpusError) as exc:
        raise CorpusError(f"line {lineno}: field 'sentence': {exc}") from None
    question = _field(obj, "question", lineno)
    if isinstance(question, str):
        question = question.split()
    if not isinstance(question, list) or not question or not all(isinstance(w, str) for w in question):
        raise CorpusError(f"line {lineno}: field 'question' must be a nonempty list of strings")
    start = _field(obj, "answer_start", lineno)
    length = _field(obj, "answer_len", lineno)
    for name, v in (("answer_start", start), ("answer_len", length)):
        if not isinstance(v, int) or isinstance(v, bool):
            raise CorpusError(f"line {lineno}: field {name!r} must be an integer")
    try:
        return Triple(sentence, start, length, question)
    except CorpusError as exc:
        raise CorpusError(f"line {lineno}: {exc}") from None


def write_triples(triples: Iterable[Triple], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in triples:
            fh.write(json.dumps(triple_to_json(t), ensure_ascii=False) + "\n")


def read_triples(path) -> List[Triple]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {lineno}: invalid JSON ({exc.msg})") from None
            out.append(triple_from_json(obj, lineno))
    return out


def type_proportions(triples: Sequence[Triple]) -> dict:
    counts = Counter(t.qtype for t in triples)
    n = len(triples)
    return {qt: counts.get(qt, 0) / n for qt in QuestionType}


def load_embeddings(path, vocab: Vocabulary, dim: int):
    """Read ``word v1 ... vd`` lines; returns ``{id: vector}`` for in-vocabulary words."""
    found = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip().split(" ")
            if len(parts) < 2:
                continue
            if len(parts) - 1 != dim:
                raise CorpusError(f"line {lineno}: expected {dim} values, got {len(parts) - 1}")
            if parts[0] in vocab:
                found[vocab.id_of[parts[0]]] = [float(v) for v in parts[1:]]
    return found
