"""Joint objective, optimisers and the training loop."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from . import numgrad as ng
from .checkpoint import Checkpoint
from .config import RunConfig
from .corpus import TagSet, Triple, Vocabulary, load_embeddings
from .decode import encode_source, generate
from .decoder import sequence_nll, teacher_forced
from .metrics import bqwa, corpus_bleu_n
from .model import Batch, ModelDims, ModelParams, make_batch
from .typepred import type_loss

logger = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class LossParts:
    total: ng.Node
    nll: np.ndarray        # per-example sequence NLL
    type_nll: np.ndarray   # per-example type loss
    token_correct: int
    token_total: int
    type_predicted: np.ndarray


def total_loss(batch: Batch, params: ModelParams, use_answer_hidden_states: bool = True) -> LossParts:
    """Mean over the batch of (sequence NLL averaged over steps) + type NLL."""
    if batch.tgt_ext is None:
        raise ValueError("batch was built without targets")
    src = encode_source(batch, params, use_answer_hidden_states)
    outputs = teacher_forced(src.state, batch.first_ids, batch.tgt_ext, src.memory, params)
    seq = sequence_nll(outputs, batch.tgt_ext, batch.tgt_mask)
    typ = type_loss(src.prediction, batch.gold_types)
    total = ng.mean(ng.add(seq, typ))
    guesses = np.stack([np.argmax(o.p_final.value, axis=1) for o in outputs], axis=1)
    hits = (guesses == batch.tgt_ext) & batch.tgt_mask
    return LossParts(
        total, seq.value.copy(), typ.value.copy(),
        int(hits.sum()), int(batch.tgt_mask.sum()), src.prediction.predicted.copy(),
    )


# --------------------------------------------------------------------------
# optimisers


def clip_gradients(grads: List[np.ndarray], max_norm: float) -> float:
    """Scale ``grads`` in place so their global L2 norm is at most ``max_norm``; returns the pre-clip norm."""
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if norm > max_norm:
        factor = max_norm / norm
        for g in grads:
            g *= factor
    return norm


class SGD:
    def __init__(self, params: ModelParams, lr: float):
        self.params = params
        self.lr = lr

    def step(self, grads: List[np.ndarray]) -> None:
        if self.lr == 0:
            return
        for node, g in zip(self.params, grads):
            node.value = node.value - self.lr * g


class Adam:
    def __init__(self, params: ModelParams, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(n.value) for n in params]
        self.v = [np.zeros_like(n.value) for n in params]
        self.t = 0

    def step(self, grads: List[np.ndarray]) -> None:
        self.t += 1
        if self.lr == 0:
            return
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for i, (node, g) in enumerate(zip(self.params, grads)):
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            node.value = node.value - self.lr * (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + self.eps)


def make_optimizer(cfg: RunConfig, params: ModelParams):
    if cfg.optimizer == "sgd":
        return SGD(params, cfg.lr)
    return Adam(params, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps)


def train_step(batch: Batch, params: ModelParams, optimizer, clip_norm: float,
               use_answer_hidden_states: bool = True) -> LossParts:
    params.zero_grad()
    parts = total_loss(batch, params, use_answer_hidden_states)
    ng.backward(parts.total)
    grads = [n.grad.copy() for n in params]
    clip_gradients(grads, clip_norm)
    optimizer.step(grads)
    return parts


# --------------------------------------------------------------------------
# training loop


@dataclass
class DataSpec:
    vocab: Vocabulary
    pos: TagSet
    ner: TagSet


def init_params(cfg: RunConfig, data: DataSpec, rng: np.random.Generator) -> ModelParams:
    dims = ModelDims.from_config(cfg, data.vocab, data.pos, data.ner)
    pretrained = None
    if cfg.pretrained_embeddings:
        pretrained = load_embeddings(cfg.pretrained_embeddings, data.vocab, cfg.word_dim)
    return ModelParams.initialize(dims, rng, cfg.init_scale, cfg.embed_init_scale, pretrained)


def evaluate_dev(params: ModelParams, cfg: RunConfig, data: DataSpec, dev: Sequence[Triple]):
    """Dev BLEU-4 and BQWA with the configured first-token mode."""
    gens = generate(dev, params, data.vocab, data.pos, data.ner, mode=cfg.mode,
                    beam_size=cfg.dev_beam_size, max_len=cfg.max_len,
                    use_answer_hidden_states=cfg.use_answer_hidden_states)
    hyps = [g.words for g in gens]
    refs = [list(t.question) for t in dev]
    return corpus_bleu_n(hyps, refs, 4), bqwa(hyps, refs)[0]


def train(cfg: RunConfig, train_set: Sequence[Triple], dev_set: Sequence[Triple], data: DataSpec,
          params: Optional[ModelParams] = None, max_steps: Optional[int] = None,
          on_checkpoint: Optional[Callable[[Checkpoint], None]] = None,
          log: Optional[Callable[[str], None]] = None) -> List[Checkpoint]:
    """Mini-batch training; returns the checkpoints taken every ``eval_interval`` steps
    (plus one at the end).  Deterministic for a fixed ``cfg.seed``."""
    if not train_set:
        raise TrainingError("training set is empty")
    rng = np.random.default_rng(cfg.seed)
    if params is None:
        params = init_params(cfg, data, rng)
    optimizer = make_optimizer(cfg, params)
    checkpoints: List[Checkpoint] = []
    step = 0
    window_loss, window_type, window_n = 0.0, 0.0, 0

    def snapshot():
        nonlocal window_loss, window_type, window_n
        dev_bleu, dev_bqwa = (None, None)
        if dev_set:
            dev_bleu, dev_bqwa = evaluate_dev(params, cfg, data, dev_set)
        ckpt = Checkpoint(params.arrays(), params.dims, step, dev_bleu, cfg.fingerprint(),
                          extra={"dev_bqwa": dev_bqwa})
        checkpoints.append(ckpt)
        if on_checkpoint:
            on_checkpoint(ckpt)
        if log:
            avg = window_loss / max(window_n, 1)
            avg_t = window_type / max(window_n, 1)
            bleu_s = "-" if dev_bleu is None else f"{dev_bleu:.2f}"
            bqwa_s = "-" if dev_bqwa is None else f"{dev_bqwa:.4f}"
            log(f"step {step}\tloss {avg:.4f}\ttype_loss {avg_t:.4f}\tdev_bleu4 {bleu_s}\tdev_bqwa {bqwa_s}")
        window_loss, window_type, window_n = 0.0, 0.0, 0

    n = len(train_set)
    for _epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for lo in range(0, n, cfg.batch_size):
            chunk = [train_set[i] for i in order[lo:lo + cfg.batch_size]]
            batch = make_batch(chunk, data.vocab, data.pos, data.ner, with_targets=True,
                               first_token=cfg.training_first_token, max_question_len=cfg.max_question_len)
            parts = train_step(batch, params, optimizer, cfg.clip_norm, cfg.use_answer_hidden_states)
            step += 1
            loss = float(parts.total.value)
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss at step {step}")
            window_loss += loss
            window_type += float(parts.type_nll.mean())
            window_n += 1
            if step % cfg.eval_interval == 0:
                snapshot()
            if max_steps is not None and step >= max_steps:
                break
        if max_steps is not None and step >= max_steps:
            break
    if not checkpoints or checkpoints[-1].step != step:
        snapshot()
    return checkpoints


def teacher_forced_accuracy(triples: Sequence[Triple], params: ModelParams, cfg: RunConfig,
                            data: DataSpec):
    """(token accuracy under teacher forcing, type-prediction accuracy) over ``triples``."""
    batch = make_batch(triples, data.vocab, data.pos, data.ner, with_targets=True,
                       first_token=cfg.training_first_token, max_question_len=cfg.max_question_len)
    with ng.no_grad():
        parts = total_loss(batch, params, cfg.use_answer_hidden_states)
    type_acc = float(np.mean(parts.type_predicted == batch.gold_types))
    return parts.token_correct / parts.token_total, type_acc
