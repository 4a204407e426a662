import math

import numpy as np
import pytest

from qtgen import numgrad as ng
from qtgen.corpus import BOS_ID, EOS_ID, QuestionType
from qtgen.decode import encode_source
from qtgen.decoder import (
    DecodingError,
    attention,
    decode_step,
    first_input_token,
    sequence_nll,
    teacher_forced,
)
from qtgen.model import make_batch
from conftest import Tiny, central_diff, rel_err
from test_encoder import triple


def source(t, with_targets=True):
    b = t.batch(with_targets=with_targets)
    return b, encode_source(b, t.params)


def step(t, prev=None):
    b, src = source(t)
    prev = b.first_ids if prev is None else prev
    out, _ = decode_step(src.state, prev, src.memory, t.params)
    return b, src, out


class TestFirstInputToken:
    def setup_method(self):
        self.vocab = Tiny(n=8, vocab_size=200).vocab

    def test_predicted_how(self):
        tok = first_input_token("predicted", self.vocab, predicted=QuestionType.HOW)
        assert tok == self.vocab.id_of["how"]

    def test_predicted_others_is_bos(self):
        assert first_input_token("predicted", self.vocab, predicted=QuestionType.OTHERS) == BOS_ID

    def test_plain_bos(self):
        for p in QuestionType:
            assert first_input_token("plain_bos", self.vocab, predicted=p) == BOS_ID

    def test_gold_modes(self):
        assert first_input_token("gold_type", self.vocab, gold_type=QuestionType.WHEN) == self.vocab.id_of["when"]
        assert first_input_token("gold_type", self.vocab, gold_type=QuestionType.OTHERS) == BOS_ID
        assert first_input_token("gold_first_word", self.vocab, gold_question=["for", "how"]) == \
            self.vocab.id_of["for"]

    def test_missing_gold_data(self):
        with pytest.raises(DecodingError):
            first_input_token("gold_type", self.vocab)
        with pytest.raises(DecodingError):
            first_input_token("gold_first_word", self.vocab, gold_question=[])
        with pytest.raises(DecodingError):
            first_input_token("bogus", self.vocab, predicted=0)


class TestAttention:
    def test_equal_scores_single_token(self):
        t = Tiny(triples=[triple("Rosa", 0, 1, "who ?")])
        t.params["att.v"].value[:] = 0.0
        _, src = source(t)
        attn, ctx = attention(src.state.s, src.memory, t.params)
        np.testing.assert_allclose(attn.value, [[0.5, 0.5]])
        np.testing.assert_allclose(ctx.value, 0.5 * src.memory.states.value.sum(axis=1))

    def test_padded_positions_get_no_weight(self):
        t = Tiny(triples=[triple("Rosa sold it .", 0, 1, "who ?"),
                          triple("Alice built the old mill at Oslo .", 0, 1, "who ?")])
        _, src = source(t)
        attn, _ = attention(src.state.s, src.memory, t.params)
        assert np.all(attn.value[0, 4:-1] == 0.0)
        assert attn.value[0, -1] > 0.0

    def test_context_gradient_wrt_states(self):
        t = Tiny(n=2, hidden=4)
        _, src = source(t)
        states = ng.parameter(src.memory.states.value.copy())
        mem = src.memory
        w = np.random.default_rng(0).normal(size=(2, 4))

        def ctx_loss(st):
            m = type(mem)(st, ng.matmul(st, t.params["att.Wh"]), mem.mask, mem.src_ext, mem.ext_size,
                          mem.vocab_size)
            return ng.sum(ng.mul(attention(ng.constant(src.state.s.value), m, t.params)[1], ng.constant(w)))

        ng.backward(ctx_loss(states))

        def f():
            with ng.no_grad():
                return float(ctx_loss(ng.constant(states.value)).value)

        assert rel_err(states.grad, central_diff(f, states.value)) < 1e-6


class TestStepDistributions:
    def test_invariants(self):
        _, src, out = step(Tiny(n=6, seed=2))
        np.testing.assert_allclose(out.attn.value.sum(axis=1), 1.0, atol=1e-9)
        np.testing.assert_allclose(out.p_final.value.sum(axis=1), 1.0, atol=1e-9)
        np.testing.assert_allclose(out.p_copy.value.sum(axis=1), 1.0, atol=1e-9)
        assert np.all(out.p_final.value >= 0)
        assert np.all((out.p_gen.value >= 0) & (out.p_gen.value <= 1))

    def test_copy_support_is_source(self):
        b, src, out = step(Tiny(n=6, seed=2))
        for r in range(b.size):
            present = set(b.src_ext[r, :b.lengths[r]])
            absent = [w for w in range(b.ext_size) if w not in present]
            assert np.all(out.p_copy.value[r, absent] == 0.0)

    def test_gate_one_gives_vocab(self):
        t = Tiny()
        t.params["gate.b"].value[:] = 1000.0
        _, _, out = step(t)
        assert np.all(out.p_gen.value == 1.0)
        V = t.dims.vocab_size
        np.testing.assert_array_equal(out.p_final.value[:, :V], out.p_vocab.value)
        assert np.all(out.p_final.value[:, V:] == 0.0)

    def test_gate_zero_single_token_is_point_mass(self):
        t = Tiny(triples=[triple("Rosa", 0, 1, "who ?")])
        t.params["gate.b"].value[:] = -1000.0
        b, _, out = step(t)
        expected = np.zeros(b.ext_size)
        expected[b.src_ext[0, 0]] = 1.0
        np.testing.assert_array_equal(out.p_final.value[0], expected)

    def test_repeated_word_sums_attention(self):
        t = Tiny(triples=[triple("the mill near the harbor .", 1, 1, "what ?")])
        b, _, out = step(t)
        a = out.attn.value[0]
        the = t.vocab.id_of["the"]
        positions = [i for i, w in enumerate(t.triples[0].words) if w == "the"]
        assert positions == [0, 3]
        source_mass = a[:-1].sum()
        expected = (a[0] + a[3]) / source_mass
        assert out.p_copy.value[0, the] == pytest.approx(expected, rel=1e-12)

    def test_type_position_only_renormalises_copy(self):
        t = Tiny()
        _, _, out = step(t)
        a = out.attn.value
        T = a.shape[1] - 1
        b = t.batch()
        manual = np.zeros_like(out.p_copy.value)
        for r in range(a.shape[0]):
            for i in range(T):
                manual[r, b.src_ext[r, i]] += a[r, i] / (1.0 - a[r, T])
        np.testing.assert_allclose(out.p_copy.value, manual, rtol=1e-12)

    def test_oov_source_word_gets_extended_id(self):
        t = Tiny(vocab_size=8)
        b, _, out = step(t)
        assert b.ext_size > t.dims.vocab_size
        assert out.p_final.shape == (b.size, b.ext_size)
        oov_cols = out.p_final.value[:, t.dims.vocab_size:]
        assert np.all(oov_cols.sum(axis=1) > 0)


class TestSequenceNll:
    def test_three_step_oracle(self):
        t = Tiny(triples=[triple("Alice built the old mill .", 0, 1, "who built it")])
        b, src = source(t)
        assert b.tgt_ext.shape[1] == 3
        outs = teacher_forced(src.state, b.first_ids, b.tgt_ext, src.memory, t.params)
        nll = sequence_nll(outs, b.tgt_ext, b.tgt_mask).value[0]
        # independent extended-distribution oracle from the step's parts
        V = t.dims.vocab_size
        src_ext = b.src_ext[0]
        losses = []
        for i, o in enumerate(outs):
            pg = o.p_gen.value[0, 0]
            a = o.attn.value[0, :-1]
            target = b.tgt_ext[0, i]
            p = pg * (o.p_vocab.value[0, target] if target < V else 0.0)
            p += (1 - pg) * a[src_ext == target].sum() / a.sum()
            losses.append(-math.log(p))
        assert nll == pytest.approx(np.mean(losses), rel=1e-12)

    def test_masked_mean(self):
        t = Tiny(n=3)
        b, src = source(t)
        outs = teacher_forced(src.state, b.first_ids, b.tgt_ext, src.memory, t.params)
        per = sequence_nll(outs, b.tgt_ext, b.tgt_mask).value
        for r in range(b.size):
            k = int(b.tgt_mask[r].sum())
            steps = [-np.log(outs[i].p_final.value[r, b.tgt_ext[r, i]]) for i in range(k)]
            assert per[r] == pytest.approx(np.mean(steps), rel=1e-12)

    def test_certain_and_uniform(self):
        from qtgen.decoder import StepOutput
        certain = StepOutput(None, None, None, None, None, ng.constant([[0.0, 1.0, 0.0]]))
        assert sequence_nll([certain], np.array([[1]]), np.array([[True]])).value[0] == 0.0
        uniform = StepOutput(None, None, None, None, None, ng.constant([[0.25] * 4]))
        got = sequence_nll([uniform, uniform], np.array([[0, 3]]), np.array([[True, True]])).value[0]
        assert got == pytest.approx(math.log(4))

    def test_targets_end_with_eos_and_skip_injected_word(self):
        t = Tiny(triples=[triple("Rosa sold it .", 0, 1, "who sold it ?")])
        b = t.batch()
        assert b.first_ids[0] == t.vocab.id_of["who"]
        words = [t.vocab.word_of[i] for i in b.tgt_ext[0]]
        assert words == ["sold", "it", "?", "</s>"]
        plain = make_batch(t.triples, t.vocab, t.pos, t.ner, with_targets=True, first_token="plain_bos")
        assert plain.first_ids[0] == BOS_ID
        assert plain.tgt_ext[0, 0] == t.vocab.id_of["who"] and plain.tgt_ext[0, -1] == EOS_ID
