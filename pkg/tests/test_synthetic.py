from collections import Counter

import numpy as np

from qtgen.corpus import QuestionType, label_question_type
from qtgen.synthetic import make_corpus, make_triple


class TestSynthetic:
    def test_deterministic(self):
        assert make_corpus(50, seed=3) == make_corpus(50, seed=3)
        assert make_corpus(50, seed=3) != make_corpus(50, seed=4)

    def test_stratified_cycles_types(self):
        types = [t.qtype for t in make_corpus(16, seed=0, stratified=True)]
        assert types == list(QuestionType) * 2

    def test_label_matches_question_and_span_is_valid(self):
        for t in make_corpus(300, seed=1, alt_prob=0.3):
            assert t.qtype == label_question_type(t.question)
            assert 0 <= t.answer_start and t.answer_start + t.answer_len <= len(t.words) - 1

    def test_answer_is_type_informative(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            when = make_triple(QuestionType.WHEN, rng)
            assert when.words[when.answer_start].isdigit()
            who = make_triple(QuestionType.WHO, rng)
            assert who.answer_start == 0

    def test_alt_openers_appear_only_when_enabled(self):
        plain = Counter(t.question[0] for t in make_corpus(400, seed=2))
        mixed = Counter(t.question[0] for t in make_corpus(400, seed=2, alt_prob=0.5))
        assert "in" not in plain and "by" not in plain
        assert mixed["in"] > 0

    def test_default_mix_follows_squad_proportions(self):
        types = Counter(t.qtype for t in make_corpus(4000, seed=5))
        assert abs(types[QuestionType.WHAT] / 4000 - 0.4326 / 0.9977) < 0.03
        assert abs(types[QuestionType.OTHERS] / 4000 - 0.2183 / 0.9977) < 0.03
