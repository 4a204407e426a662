import numpy as np
import pytest

from qtgen.config import RunConfig
from qtgen.corpus import TagSet, build_vocabulary
from qtgen.model import ModelDims, ModelParams, make_batch
from qtgen.synthetic import make_corpus


def central_diff(f, x, eps=1e-5):
    """Independent finite-difference oracle: d f() / d x, perturbing x in place."""
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + eps
        up = f()
        x[idx] = old - eps
        down = f()
        x[idx] = old
        g[idx] = (up - down) / (2 * eps)
    return g


def rel_err(a, b):
    return np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8))


class Tiny:
    """Small random model plus a batch of synthetic triples."""

    def __init__(self, seed=0, n=3, hidden=6, vocab_size=40, use_answer_hidden_states=True, scale=0.3,
                 triples=None, num_layers=2):
        self.triples = list(triples) if triples is not None else make_corpus(n, seed=seed, stratified=True)
        self.cfg = RunConfig(word_dim=5, feat_dim=2, hidden_dim=hidden, vocab_size=vocab_size,
                             num_layers=num_layers, use_answer_hidden_states=use_answer_hidden_states)
        self.vocab = build_vocabulary(self.triples, vocab_size)
        self.pos = TagSet.from_triples(self.triples, "pos")
        self.ner = TagSet.from_triples(self.triples, "ner")
        self.dims = ModelDims.from_config(self.cfg, self.vocab, self.pos, self.ner)
        rng = np.random.default_rng(seed)
        self.params = ModelParams.initialize(self.dims, rng, init_scale=scale, embed_scale=scale)
        for node in self.params:
            if node.value.ndim == 1:
                node.value = rng.uniform(-scale, scale, size=node.value.shape)

    def batch(self, with_targets=True, first_token="gold_type"):
        return make_batch(self.triples, self.vocab, self.pos, self.ner, with_targets=with_targets,
                          first_token=first_token)


@pytest.fixture
def tiny():
    return Tiny()
