import math

import numpy as np
import pytest

from qtgen import numgrad as ng
from qtgen.decoder import build_memory
from qtgen.encoder import run_encoder
from qtgen.typepred import TypePrediction, predict_type, type_loss
from conftest import Tiny, central_diff, rel_err
from test_encoder import np_sigmoid, triple


def np_type_lstm(inputs, h0, W, b):
    H = h0.shape[0]
    h, c = h0, np.zeros(H)
    for x in inputs:
        z = np.concatenate([x, h]) @ W + b
        i, f, g, o = np_sigmoid(z[:H]), np_sigmoid(z[H:2 * H]), np.tanh(z[2 * H:3 * H]), np_sigmoid(z[3 * H:])
        c = f * c + i * g
        h = o * np.tanh(c)
    return h


def run(t, use_states=True):
    b = t.batch(with_targets=False)
    enc = run_encoder(b, t.params)
    return b, enc, predict_type(enc, b.answer_start, b.answer_len, t.params, use_states)


class TestPredictType:
    @pytest.mark.parametrize("use_states", [True, False])
    def test_matches_reference_recurrence(self, use_states):
        t = Tiny(triples=[triple("Alice built the old mill in 1901 .", 2, 3),
                          triple("Bruno sold it .", 0, 1, "who ?")],
                 use_answer_hidden_states=use_states)
        b, enc, pred = run(t, use_states)
        source = enc.states.value if use_states else enc.inputs.value
        for r in range(2):
            m, a = b.answer_start[r], b.answer_len[r]
            inputs = [np.concatenate([source[r, m + j], enc.feat_embeds.value[r, m + j]]) for j in range(a)]
            h = np_type_lstm(inputs, enc.final.value[r], t.params["type.W"].value, t.params["type.b"].value)
            np.testing.assert_allclose(pred.type_state.value[r], h, rtol=1e-12, atol=1e-14)
            logits = h @ t.params["type.Wq"].value
            p = np.exp(logits - logits.max())
            np.testing.assert_allclose(pred.probs[r], p / p.sum(), rtol=1e-12)

    def test_initial_state_is_top_layer_last_state(self):
        t = Tiny(triples=[triple("Alice built the old mill .", 0, 1, "who ?")])
        _, enc, _ = run(t)
        np.testing.assert_array_equal(enc.final.value[0], enc.states.value[0, -1])

    def test_zero_wq_gives_uniform_and_lowest_id(self):
        t = Tiny()
        t.params["type.Wq"].value[:] = 0.0
        _, _, pred = run(t)
        np.testing.assert_allclose(pred.probs, 0.125, atol=1e-15)
        assert list(pred.predicted) == [0] * len(t.triples)

    def test_distribution_invariants(self):
        _, _, pred = run(Tiny(n=8, seed=3))
        assert np.all(pred.probs >= 0)
        np.testing.assert_allclose(pred.probs.sum(axis=1), 1.0, atol=1e-9)
        np.testing.assert_array_equal(pred.predicted, np.argmax(pred.probs, axis=1))

    def test_type_state_is_shared_with_memory(self):
        t = Tiny()
        b, enc, pred = run(t)
        mem = build_memory(enc, pred, t.params, b.src_ext, b.ext_size)
        # memory position T+1 is a reshape of the very node that feeds the type softmax
        assert mem.states.parents[1].parents[0] is pred.type_state
        assert pred.dist.parents[0].parents[0] is pred.type_state
        np.testing.assert_array_equal(mem.states.value[:, -1], pred.type_state.value)

    def test_invalid_span(self):
        t = Tiny()
        b = t.batch(with_targets=False)
        enc = run_encoder(b, t.params)
        with pytest.raises(ValueError):
            predict_type(enc, b.answer_start, np.zeros_like(b.answer_len), t.params)
        with pytest.raises(ValueError):
            predict_type(enc, b.lengths, b.answer_len, t.params)


class TestTypeLoss:
    def make(self, probs):
        return TypePrediction(ng.constant(np.array([probs])), None, None)

    def test_certain(self):
        assert type_loss(self.make([0, 1, 0, 0, 0, 0, 0, 0.0]), [1]).value[0] == 0.0

    def test_uniform(self):
        assert type_loss(self.make([0.125] * 8), [3]).value[0] == pytest.approx(math.log(8))
        assert math.log(8) == pytest.approx(2.0794, abs=1e-4)

    def test_quarter(self):
        probs = [0.5, 0.25, 0.25, 0, 0, 0, 0, 0]
        assert type_loss(self.make(probs), [1]).value[0] == pytest.approx(math.log(4))

    def test_floor(self):
        assert type_loss(self.make([1.0] + [0.0] * 7), [5]).value[0] == pytest.approx(-math.log(1e-12))


class TestTypeGradients:
    def test_dist_gradients_match_finite_differences(self):
        t = Tiny(n=2, hidden=4)
        b = t.batch(with_targets=False)
        gold = np.array([int(x.qtype) for x in t.triples])

        def loss():
            enc = run_encoder(b, t.params)
            return ng.sum(type_loss(predict_type(enc, b.answer_start, b.answer_len, t.params), gold))

        t.params.zero_grad()
        ng.backward(loss())

        def f():
            with ng.no_grad():
                return float(loss().value)

        for name in ("type.Wq", "type.W", "type.b"):
            node = t.params[name]
            assert rel_err(node.grad, central_diff(f, node.value)) < 1e-4, name
