"""Finite-difference verification of the full training objective on a tiny graph."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import grad_check
from .data_io import SynthConfig, gen_synthetic
from .model import forward, init_params, stance_heads
from .objectives import (consistency_labels, consistency_loss, echo_chamber_loss, echo_pairs,
                         expert_loss, total_loss)
from .training import TrainConfig, stance_rows

# 4 + 2 + 2 + 2 parties + 4 institutions + 2 + 2 + 2 = 20 nodes
GRADCHECK_GRAPH = SynthConfig(n_legislators=4, n_states=2, n_terms=2, n_governors=2,
                              n_presidents=2, n_justices=2, feature_dim=8, seed=0)


def gradcheck_problem(seed=0, d_hidden=16, n_layers=2, gated=True):
    """``(loss_fn, params)`` for the total loss with every term active.

    All labels count as training labels.  Consistency targets and negative
    samples are drawn once and frozen so the loss is a smooth function of
    the parameters.
    """
    hin, labels = gen_synthetic(GRADCHECK_GRAPH)
    labels = labels.with_entries(type(e)(e.entity, e.source, e.score, e.label, "train")
                                 for e in labels.entries)
    cfg = TrainConfig(d_hidden=d_hidden, n_layers=n_layers, gated=gated, seed=seed)
    params = init_params(hin.feature_dim, d_hidden, n_layers, cfg.n_labels, seed, gated=gated)
    idx, rows = stance_rows(hin)
    pl, pc = stance_heads(params, ad.take_rows(forward(params, hin), idx))
    lib_t, con_t = consistency_labels(pl, pc, cfg.n_labels)
    pairs = echo_pairs(hin, cfg.k_neg, np.random.default_rng([seed, 0]))

    def loss_fn():
        x = forward(params, hin)
        pl, pc = stance_heads(params, ad.take_rows(x, idx))
        l1 = expert_loss(pl, pc, labels, "train", rows)
        l2 = consistency_loss(pl, pc, lib_t, con_t)
        l3 = echo_chamber_loss(x, hin, cfg.k_neg, cfg.q, None, pairs=pairs)
        return total_loss(l1, l2, l3, params, cfg.weights)[0]

    return loss_fn, params


def run_gradcheck(seed=0, eps=1e-5, tol=1e-4, **kw):
    loss_fn, params = gradcheck_problem(seed, **kw)
    return grad_check(loss_fn, dict(params.items()), eps=eps, tol=tol)
