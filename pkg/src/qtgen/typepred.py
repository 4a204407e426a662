"""Question-type prediction from the answer span."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numgrad as ng
from .encoder import EncodedSentence
from .model import ModelParams


@dataclass
class TypePrediction:
    dist: ng.Node        # [B, 8] P(Q_w)
    type_state: ng.Node  # [B, H] h_a^q, shared with decoder attention
    predicted: np.ndarray

    @property
    def probs(self) -> np.ndarray:
        return self.dist.value


def predict_type(enc: EncodedSentence, answer_start, answer_len, params: ModelParams,
                 use_answer_hidden_states: bool = True) -> TypePrediction:
    """Run the type LSTM over the answer span, starting from the encoder's h_T.

    With ``use_answer_hidden_states=False`` the span's raw inputs x_t replace
    the encoder states as the per-step input.
    """
    answer_start = np.asarray(answer_start, dtype=np.int64)
    answer_len = np.asarray(answer_len, dtype=np.int64)
    if np.any(answer_len < 1) or np.any(answer_start < 0) or np.any(answer_start + answer_len > enc.lengths):
        raise ValueError("answer span outside the encoded sentence")
    source = enc.states if use_answer_hidden_states else enc.inputs
    weights = params.lstm("type")
    B = answer_start.shape[0]
    h = enc.final
    c = ng.constant(np.zeros((B, weights.hidden_dim)))
    for j in range(int(answer_len.max())):
        idx = np.minimum(answer_start + j, enc.T - 1)
        step_in = ng.concat([ng.pick(source, idx), ng.pick(enc.feat_embeds, idx)])
        h_new, c_new = ng.lstm_cell(step_in, h, c, weights)
        live = (j < answer_len).astype(np.float64)[:, None]
        h = ng.blend(live, h_new, h)
        c = ng.blend(live, c_new, c)
    dist = ng.softmax(ng.matmul(h, params["type.Wq"]))
    # argmax returns the lowest index on ties
    return TypePrediction(dist=dist, type_state=h, predicted=np.argmax(dist.value, axis=-1))


def type_loss(pred: TypePrediction, gold) -> ng.Node:
    """Per-example -log P(gold type), probability floored at 1e-12."""
    return ng.nll(pred.dist, gold, floor=1e-12)
