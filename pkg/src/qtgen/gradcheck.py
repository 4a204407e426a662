"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from . import numgrad as ng
from .config import RunConfig
from .corpus import TagSet, Triple, build_vocabulary
from .model import ModelDims, ModelParams, make_batch
from .synthetic import make_corpus

STEP = 1e-5
# below this magnitude a gradient entry is compared in absolute terms
# (central differences carry ~1e-11 round-off at STEP=1e-5)
DENOM_FLOOR = 1e-6


def relative_error(analytic, numeric, floor: float = DENOM_FLOOR) -> np.ndarray:
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def numeric_gradient(f: Callable[[], float], array: np.ndarray, step: float = STEP,
                     indices: Optional[Sequence[tuple]] = None) -> np.ndarray:
    """d f / d array by central differences, perturbing ``array`` in place."""
    grad = np.zeros_like(array)
    it = indices if indices is not None else list(np.ndindex(array.shape))
    for idx in it:
        orig = array[idx]
        array[idx] = orig + step
        up = f()
        array[idx] = orig - step
        down = f()
        array[idx] = orig
        grad[idx] = (up - down) / (2 * step)
    return grad


@dataclass
class GradReport:
    max_rel_error: float
    worst_param: str
    worst_index: tuple
    entries: int
    per_param: Dict[str, float]


def check_params(loss_fn: Callable[[], ng.Node], params: ModelParams,
                 names: Optional[List[str]] = None) -> GradReport:
    """Compare backprop gradients of ``loss_fn()`` with central differences for every entry."""
    params.zero_grad()
    loss = loss_fn()
    ng.backward(loss)
    analytic = {name: params[name].grad.copy() for name in params.names()}

    def value() -> float:
        with ng.no_grad():
            return float(loss_fn().value)

    worst, worst_name, worst_idx, count = -1.0, "", (), 0
    per_param = {}
    for name in names or params.names():
        node = params[name]
        numeric = numeric_gradient(value, node.value)
        err = relative_error(analytic[name], numeric)
        per_param[name] = float(err.max())
        count += err.size
        if err.max() > worst:
            worst = float(err.max())
            worst_name = name
            worst_idx = tuple(int(i) for i in np.unravel_index(int(np.argmax(err)), err.shape))
    return GradReport(worst, worst_name, worst_idx, count, per_param)


def toy_problem(seed: int = 0, hidden_dim: int = 8, vocab_size: int = 20, n_examples: int = 2,
                use_answer_hidden_states: bool = True):
    """Tiny model + 2-example batch for gradient sweeps.

    Returns ``(cfg, params, batch, triples)``.
    """
    triples: List[Triple] = make_corpus(n_examples, seed=seed, stratified=False)
    cfg = RunConfig(word_dim=6, feat_dim=3, hidden_dim=hidden_dim, num_layers=2, vocab_size=vocab_size,
                    use_answer_hidden_states=use_answer_hidden_states, seed=seed)
    vocab = build_vocabulary(triples, vocab_size)
    pos, ner = TagSet.from_triples(triples, "pos"), TagSet.from_triples(triples, "ner")
    dims = ModelDims.from_config(cfg, vocab, pos, ner)
    rng = np.random.default_rng(seed)
    # larger-than-default weights so every gate sits away from saturation and zero
    params = ModelParams.initialize(dims, rng, init_scale=0.5, embed_scale=0.5)
    for name in params.names():
        node = params[name]
        if node.value.ndim == 1:
            node.value = rng.uniform(-0.5, 0.5, size=node.value.shape)
    batch = make_batch(triples, vocab, pos, ner, with_targets=True)
    return cfg, params, batch, (vocab, pos, ner, triples)


def run_toy_gradcheck(seed: int = 0, **kwargs) -> GradReport:
    from .training import total_loss

    cfg, params, batch, _ = toy_problem(seed, **kwargs)
    return check_params(lambda: total_loss(batch, params, cfg.use_answer_hidden_states).total, params)
