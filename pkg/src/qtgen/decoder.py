"""Unified attention decoder with copy mechanism."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from . import numgrad as ng
from .corpus import BOS_ID, QuestionType, Vocabulary
from .encoder import EncodedSentence
from .model import ModelParams, question_word_id, to_decoder_input
from .typepred import TypePrediction


class DecodingError(ValueError):
    pass


@dataclass
class DecoderState:
    s: ng.Node       # [B, H]
    cell: ng.Node    # [B, H]
    c_prev: ng.Node  # [B, H] previous context vector


@dataclass
class Memory:
    """Attention memory: h_1..h_T followed by the type state at position T+1."""

    states: ng.Node     # [B, T+1, H]
    projected: ng.Node  # [B, T+1, H]  states @ Wh
    mask: np.ndarray    # [B, T+1]
    src_ext: np.ndarray  # [B, T]
    ext_size: int
    vocab_size: int

    @property
    def T(self) -> int:
        return self.src_ext.shape[1]


@dataclass
class StepOutput:
    attn: ng.Node      # [B, T+1]
    context: ng.Node   # [B, H]
    p_gen: ng.Node     # [B, 1]
    p_vocab: ng.Node   # [B, V]
    p_copy: ng.Node    # [B, V_ext]
    p_final: ng.Node   # [B, V_ext]


def first_input_token(mode: str, vocab: Vocabulary, predicted: Optional[int] = None,
                      gold_type: Optional[int] = None, gold_question: Optional[Sequence[str]] = None) -> int:
    """Token id fed to the decoder at step 1."""
    if mode == "plain_bos":
        return BOS_ID
    if mode == "predicted":
        if predicted is None:
            raise DecodingError("mode 'predicted' needs a predicted type")
        return question_word_id(QuestionType(int(predicted)), vocab)
    if mode == "gold_type":
        if gold_type is None:
            raise DecodingError("mode 'gold_type' needs the gold question type")
        return question_word_id(QuestionType(int(gold_type)), vocab)
    if mode == "gold_first_word":
        if not gold_question:
            raise DecodingError("mode 'gold_first_word' needs the reference question")
        return vocab.lookup(gold_question[0])
    raise DecodingError(f"unknown first-token mode {mode!r}")


def build_memory(enc: EncodedSentence, pred: TypePrediction, params: ModelParams,
                 src_ext: np.ndarray, ext_size: int) -> Memory:
    B, T = enc.mask.shape
    H = pred.type_state.shape[-1]
    states = ng.concat([enc.states, ng.reshape(pred.type_state, (B, 1, H))], axis=1)
    mask = np.concatenate([enc.mask, np.ones((B, 1), dtype=bool)], axis=1)
    return Memory(states, ng.matmul(states, params["att.Wh"]), mask, src_ext, ext_size,
                  params.dims.vocab_size)


def initial_state(enc: EncodedSentence, params: ModelParams) -> DecoderState:
    s0 = ng.add(ng.matmul(enc.summary, params["dec.init.W"]), params["dec.init.b"])
    B, H = s0.shape
    zeros = np.zeros((B, H))
    return DecoderState(s0, ng.constant(zeros), ng.constant(zeros.copy()))


def attention(s: ng.Node, memory: Memory, params: ModelParams):
    """Additive attention over T+1 positions; returns ``(attn, context)``."""
    B, T1, H = memory.projected.shape
    query = ng.reshape(ng.matmul(s, params["att.Ws"]), (B, 1, H))
    e = ng.tanh(ng.add(memory.projected, query))
    scores = ng.reshape(ng.matmul(e, params["att.v"]), (B, T1))
    attn = ng.softmax(scores, mask=memory.mask)
    return attn, ng.weighted_sum(attn, memory.states)


def copy_distribution(attn: ng.Node, memory: Memory) -> ng.Node:
    """Attention mass over source positions 1..T, renormalised and summed per extended id."""
    source_attn = ng.renormalize(ng.slice_last(attn, 0, memory.T))
    return ng.scatter_add(source_attn, memory.src_ext, memory.ext_size)


def decode_step(state: DecoderState, prev_ids, memory: Memory, params: ModelParams):
    """One decoder step; ``prev_ids`` may be extended ids (mapped to UNK for embedding)."""
    prev = to_decoder_input(prev_ids, memory.vocab_size)
    emb = ng.take_rows(params["emb.word"], prev)
    s, cell = ng.lstm_cell(ng.concat([emb, state.c_prev]), state.s, state.cell, params.lstm("dec"))
    attn, context = attention(s, memory, params)
    sc = ng.concat([s, context])
    hidden = ng.tanh(ng.add(ng.matmul(sc, params["out.V1"]), params["out.b1"]))
    p_vocab = ng.softmax(ng.add(ng.matmul(hidden, params["out.V2"]), params["out.b2"]))
    p_gen = ng.logistic(ng.add(ng.matmul(ng.concat([s, context, emb]), params["gate.w"]), params["gate.b"]))
    p_copy = copy_distribution(attn, memory)
    p_final = ng.mix(p_gen, ng.pad_last(p_vocab, memory.ext_size), p_copy)
    out = StepOutput(attn, context, p_gen, p_vocab, p_copy, p_final)
    return out, DecoderState(s, cell, context)


def teacher_forced(state: DecoderState, first_ids, targets: np.ndarray, memory: Memory,
                   params: ModelParams) -> List[StepOutput]:
    """Run K steps feeding ``first_ids`` then the gold targets shifted by one."""
    outputs = []
    prev = np.asarray(first_ids)
    for i in range(targets.shape[1]):
        out, state = decode_step(state, prev, memory, params)
        outputs.append(out)
        prev = targets[:, i]
    return outputs


def sequence_nll(outputs: Sequence[StepOutput], targets: np.ndarray, mask: np.ndarray) -> ng.Node:
    """Per-example mean over real steps of -log P(w_i*), floored at 1e-12."""
    m = np.asarray(mask, dtype=np.float64)
    lengths = m.sum(axis=1)
    step_losses = ng.stack([ng.nll(o.p_final, targets[:, i]) for i, o in enumerate(outputs)], axis=1)
    weights = ng.constant(m / lengths[:, None])
    return ng.sum(ng.mul(step_losses, weights), axis=1)
