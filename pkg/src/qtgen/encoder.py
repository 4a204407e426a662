"""Feature-rich bidirectional LSTM encoder."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numgrad as ng
from .model import Batch, ModelParams


@dataclass
class EncodedSentence:
    states: ng.Node       # [B, T, H] top-layer h_1..h_T
    inputs: ng.Node       # [B, T, input_dim] x_1..x_T
    feat_embeds: ng.Node  # [B, T, 3 * feat_dim] l_1..l_T
    final: ng.Node        # [B, H] h_T (at each example's true last position)
    summary: ng.Node      # [B, H] last forward state ++ first backward state
    mask: np.ndarray      # [B, T]
    lengths: np.ndarray

    @property
    def T(self) -> int:
        return self.states.shape[1]


def embed_inputs(batch: Batch, params: ModelParams):
    """Return ``(x, l)``: x_t = [e_t; a_t; l_t] and l_t = [pos; ner; case]."""
    e = ng.take_rows(params["emb.word"], batch.src_ids)
    a = ng.take_rows(params["emb.answer"], batch.answer_tags)
    lex = ng.concat(
        [
            ng.take_rows(params["emb.pos"], batch.pos_ids),
            ng.take_rows(params["emb.ner"], batch.ner_ids),
            ng.take_rows(params["emb.case"], batch.case_ids),
        ]
    )
    return ng.concat([e, a, lex]), lex


def _run_direction(xs, mask: np.ndarray, weights: ng.LSTMWeights, reverse: bool):
    B, T = mask.shape
    H = weights.hidden_dim
    h = ng.constant(np.zeros((B, H)))
    c = ng.constant(np.zeros((B, H)))
    outs = [None] * T
    steps = range(T - 1, -1, -1) if reverse else range(T)
    for t in steps:
        h_new, c_new = ng.lstm_cell(xs[t], h, c, weights)
        # padded steps carry the previous state through unchanged
        keep = mask[:, t:t + 1]
        h = ng.blend(keep, h_new, h)
        c = ng.blend(keep, c_new, c)
        outs[t] = h
    return outs


def encode(x: ng.Node, mask: np.ndarray, params: ModelParams, num_layers: int):
    """Stacked BiLSTM over ``x`` [B, T, d]; returns per-step top-layer nodes (fwd, bwd)."""
    B, T = mask.shape
    steps = [ng.pick(x, np.full(B, t)) for t in range(T)]
    for layer in range(num_layers):
        fwd = _run_direction(steps, mask, params.lstm(f"enc.{layer}.fwd"), reverse=False)
        bwd = _run_direction(steps, mask, params.lstm(f"enc.{layer}.bwd"), reverse=True)
        steps = [ng.concat([f, b]) for f, b in zip(fwd, bwd)]
    return steps, fwd, bwd


def run_encoder(batch: Batch, params: ModelParams) -> EncodedSentence:
    x, lex = embed_inputs(batch, params)
    steps, fwd, bwd = encode(x, batch.src_mask, params, params.dims.num_layers)
    states = ng.stack(steps, axis=1)
    last = batch.lengths - 1
    # forward states are frozen after the true end, so fwd[-1] is each row's last real step
    summary = ng.concat([fwd[-1], bwd[0]])
    return EncodedSentence(
        states=states,
        inputs=x,
        feat_embeds=lex,
        final=ng.pick(states, last),
        summary=summary,
        mask=batch.src_mask,
        lengths=batch.lengths,
    )
