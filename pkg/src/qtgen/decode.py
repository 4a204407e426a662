"""Greedy and beam-search question generation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from . import numgrad as ng
from .corpus import BOS_ID, EOS_ID, PAD_ID, TagSet, Triple, Vocabulary
from .decoder import (
    DecoderState,
    DecodingError,
    Memory,
    build_memory,
    decode_step,
    first_input_token,
    initial_state,
)
from .encoder import run_encoder
from .model import Batch, ModelParams, make_batch
from .typepred import TypePrediction, predict_type

NEVER_EMIT = (PAD_ID, BOS_ID)


@dataclass
class Hypothesis:
    tokens: List[int]           # extended ids, injected first word included
    logprob: float
    state: Optional[DecoderState] = None
    finished: bool = False
    injected: int = 0           # 1 when tokens[0] was fed rather than generated

    @property
    def generated(self) -> int:
        return len(self.tokens) - self.injected

    @property
    def score(self) -> float:
        """Length-normalised log-probability over generated tokens."""
        return self.logprob / max(self.generated, 1)


@dataclass
class SourceEncoding:
    batch: Batch
    prediction: TypePrediction
    memory: Memory
    state: DecoderState
    params: ModelParams


def encode_source(batch: Batch, params: ModelParams, use_answer_hidden_states: bool = True) -> SourceEncoding:
    enc = run_encoder(batch, params)
    pred = predict_type(enc, batch.answer_start, batch.answer_len, params, use_answer_hidden_states)
    memory = build_memory(enc, pred, params, batch.src_ext, batch.ext_size)
    return SourceEncoding(batch, pred, memory, initial_state(enc, params), params)


def step_log_probs(p_final: np.ndarray, final_step: bool) -> np.ndarray:
    """Log-probabilities with PAD/BOS excluded; only EOS is allowed on the last step."""
    with np.errstate(divide="ignore"):
        logp = np.log(p_final)
    logp[:, list(NEVER_EMIT)] = -np.inf
    if final_step:
        eos = logp[:, EOS_ID].copy()
        logp[:] = -np.inf
        logp[:, EOS_ID] = eos
    return logp


def _select_rows(memory: Memory, rows: np.ndarray) -> Memory:
    return Memory(
        ng.constant(memory.states.value[rows]),
        ng.constant(memory.projected.value[rows]),
        memory.mask[rows],
        memory.src_ext[rows],
        memory.ext_size,
        memory.vocab_size,
    )


def _select_state(state: DecoderState, rows) -> DecoderState:
    return DecoderState(
        ng.constant(state.s.value[rows]),
        ng.constant(state.cell.value[rows]),
        ng.constant(state.c_prev.value[rows]),
    )


def _first_ids(src: SourceEncoding, triples: Sequence[Triple], mode: str, vocab: Vocabulary) -> List[int]:
    out = []
    for b, t in enumerate(triples):
        out.append(
            first_input_token(
                mode, vocab,
                predicted=int(src.prediction.predicted[b]),
                gold_type=int(t.qtype),
                gold_question=t.question,
            )
        )
    return out


def beam_search_encoded(src: SourceEncoding, row: int, first_id: int, beam_size: int,
                        max_len: int) -> List[Hypothesis]:
    """Beam search for one example of an encoded batch.

    Candidates are ranked by cumulative log-probability.  EOS candidates that
    make the overall top-k retire to the completed pool, which keeps the k best
    by length-normalised score; the top-k unfinished candidates stay live.
    Search ends when nothing is live, at ``max_len`` (where only EOS may be
    emitted), or once the pool is full and no live hypothesis scores above its
    worst entry.
    """
    if beam_size < 1 or max_len < 1:
        raise DecodingError("beam_size and max_len must be >= 1")
    injected = int(first_id != BOS_ID)
    start_tokens = [first_id] if injected else []
    memory = _select_rows(src.memory, np.array([row]))
    state = _select_state(src.state, np.array([row]))
    live = [Hypothesis(list(start_tokens), 0.0, state, injected=injected)]
    prev = np.array([first_id])
    completed: List[Hypothesis] = []
    with ng.no_grad():
        for step in range(1, max_len + 1):
            n = len(live)
            mem = _select_rows(memory, np.zeros(n, dtype=np.int64))
            states = DecoderState(
                ng.constant(np.concatenate([h.state.s.value for h in live])),
                ng.constant(np.concatenate([h.state.cell.value for h in live])),
                ng.constant(np.concatenate([h.state.c_prev.value for h in live])),
            )
            out, new_state = decode_step(states, prev, mem, src.params)
            logp = step_log_probs(out.p_final.value, final_step=(step == max_len))
            totals = np.array([h.logprob for h in live])[:, None] + logp
            flat = totals.ravel()
            # stable order: ties resolve to the lower (hypothesis, token) index
            order = np.argsort(-flat, kind="stable")
            order = order[np.isfinite(flat[order])]
            width = logp.shape[1]
            next_live = []
            for rank, idx in enumerate(order):
                h_i, tok = divmod(int(idx), width)
                if tok == EOS_ID:
                    if rank < beam_size:
                        completed.append(
                            Hypothesis(live[h_i].tokens + [tok], float(flat[idx]), None, True, injected)
                        )
                    continue
                if len(next_live) < beam_size:
                    next_live.append((h_i, tok, float(flat[idx])))
                if rank >= beam_size and len(next_live) >= beam_size:
                    break
            # keep the k best completions by normalised score
            completed = sorted(completed, key=lambda h: -h.score)[:beam_size]
            if not next_live or step == max_len:
                break
            if len(completed) >= beam_size:
                best_live = max(lp for _, _, lp in next_live) / step
                if best_live < completed[-1].score:
                    break
            rows = np.array([h_i for h_i, _, _ in next_live])
            sel = _select_state(new_state, rows)
            live = [
                Hypothesis(
                    live[h_i].tokens + [tok], lp,
                    DecoderState(
                        ng.constant(sel.s.value[k:k + 1]),
                        ng.constant(sel.cell.value[k:k + 1]),
                        ng.constant(sel.c_prev.value[k:k + 1]),
                    ),
                    injected=injected,
                )
                for k, (h_i, tok, lp) in enumerate(next_live)
            ]
            prev = np.array([tok for _, tok, _ in next_live])
    pool = completed if completed else live
    return sorted(pool, key=lambda h: -h.score)


def encode_for_inference(triples: Sequence[Triple], params: ModelParams, vocab: Vocabulary,
                         pos: TagSet, ner: TagSet, use_answer_hidden_states: bool = True) -> SourceEncoding:
    batch = make_batch(triples, vocab, pos, ner)
    with ng.no_grad():
        return encode_source(batch, params, use_answer_hidden_states)


def beam_search(triple: Triple, params: ModelParams, vocab: Vocabulary, pos: TagSet, ner: TagSet,
                beam_size: int = 12, max_len: int = 30, mode: str = "predicted",
                use_answer_hidden_states: bool = True) -> List[Hypothesis]:
    src = encode_for_inference([triple], params, vocab, pos, ner, use_answer_hidden_states)
    first = _first_ids(src, [triple], mode, vocab)[0]
    return beam_search_encoded(src, 0, first, beam_size, max_len)


def greedy_encoded(src: SourceEncoding, first_ids: Sequence[int], max_len: int) -> List[Hypothesis]:
    """Batched greedy decoding: argmax at every step until EOS."""
    B = src.batch.size
    first_ids = np.asarray(first_ids, dtype=np.int64)
    injected = (first_ids != BOS_ID).astype(int)
    tokens = [[int(f)] if inj else [] for f, inj in zip(first_ids, injected)]
    logprob = np.zeros(B)
    done = np.zeros(B, dtype=bool)
    state, prev = src.state, first_ids
    with ng.no_grad():
        for step in range(1, max_len + 1):
            out, state = decode_step(state, prev, src.memory, src.params)
            logp = step_log_probs(out.p_final.value, final_step=(step == max_len))
            choice = np.argmax(logp, axis=1)
            for b in np.flatnonzero(~done):
                tokens[b].append(int(choice[b]))
                logprob[b] += logp[b, choice[b]]
            done |= choice == EOS_ID
            if done.all():
                break
            prev = choice
    return [
        Hypothesis(tokens[b], float(logprob[b]), None, tokens[b][-1] == EOS_ID, int(injected[b]))
        for b in range(B)
    ]


def greedy_decode(triples: Sequence[Triple], params: ModelParams, vocab: Vocabulary, pos: TagSet,
                  ner: TagSet, max_len: int = 30, mode: str = "predicted",
                  use_answer_hidden_states: bool = True) -> List[Hypothesis]:
    src = encode_for_inference(triples, params, vocab, pos, ner, use_answer_hidden_states)
    return greedy_encoded(src, _first_ids(src, triples, mode, vocab), max_len)


def detokenize(hyp: Hypothesis, vocab: Vocabulary, oov_words: Sequence[str]) -> List[str]:
    """Surface words for a hypothesis; copy ids resolve to the source words they point at."""
    V = len(vocab)
    words = []
    for tok in hyp.tokens:
        if tok == EOS_ID:
            continue
        if tok < V:
            words.append(vocab.word_of[tok])
        elif tok - V < len(oov_words):
            words.append(oov_words[tok - V])
        else:
            raise DecodingError(f"extended id {tok} has no source word (only {len(oov_words)} copied)")
    return words


@dataclass
class Generation:
    words: List[str]
    predicted_type: int
    hypothesis: Hypothesis = field(repr=False)


def generate(triples: Sequence[Triple], params: ModelParams, vocab: Vocabulary, pos: TagSet,
             ner: TagSet, mode: str = "predicted", beam_size: int = 12, max_len: int = 30,
             use_answer_hidden_states: bool = True, chunk: int = 64) -> List[Generation]:
    """Decode every triple in order; ``beam_size=1`` runs batched greedy decoding."""
    results: List[Generation] = []
    for lo in range(0, len(triples), chunk):
        part = list(triples[lo:lo + chunk])
        src = encode_for_inference(part, params, vocab, pos, ner, use_answer_hidden_states)
        firsts = _first_ids(src, part, mode, vocab)
        if beam_size == 1:
            hyps = greedy_encoded(src, firsts, max_len)
        else:
            hyps = [beam_search_encoded(src, b, firsts[b], beam_size, max_len)[0] for b in range(len(part))]
        for b, h in enumerate(hyps):
            results.append(
                Generation(detokenize(h, vocab, src.batch.oov_words[b]), int(src.prediction.predicted[b]), h)
            )
    return results
