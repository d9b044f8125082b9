"""Training losses: expert-label alignment, stance consistency, echo chamber."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, CoverageError, SchemaError

SOURCES = ("liberal", "conservative")

# Lower edges of the five stance bins: strongly oppose .. strongly favor.
BIN_EDGES = (0.0, 0.1, 0.25, 0.75, 0.9)
BIN_NAMES = ("strongly oppose", "oppose", "neutral", "favor", "strongly favor")


def bin_score(s, n_labels=5):
    """Map a think-tank score in [0, 1] to a stance class; bins are half-open ``[lo, hi)``.

    >>> bin_score(0.95), bin_score(0.5), bin_score(0.1)
    (4, 2, 1)
    """
    if n_labels != 5:
        raise ValueError("score binning is defined for 5 classes only")
    s = float(s)
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"score must lie in [0, 1], got {s}")
    return int(np.searchsorted(BIN_EDGES, s, side="right") - 1)


@dataclass(frozen=True)
class LabelEntry:
    entity: str
    source: str
    score: float
    label: int
    split: Optional[str] = None


@dataclass(frozen=True)
class ExpertLabels:
    entries: tuple
    n_labels: int = 5

    def __post_init__(self):
        seen = set()
        for i, e in enumerate(self.entries):
            if e.source not in SOURCES:
                raise SchemaError(f"labels[{i}]", f"unknown source {e.source!r}")
            if (e.entity, e.source) in seen:
                raise SchemaError(f"labels[{i}]", f"duplicate label for ({e.entity!r}, {e.source!r})")
            seen.add((e.entity, e.source))

    @classmethod
    def from_scores(cls, records, n_labels=5):
        """Build from ``(entity, source, score)`` triples."""
        return cls(tuple(LabelEntry(ent, src, float(s), bin_score(s, n_labels))
                         for ent, src, s in records), n_labels)

    def __len__(self):
        return len(self.entries)

    def select(self, source=None, split=None):
        return [e for e in self.entries
                if (source is None or e.source == source) and (split is None or e.split == split)]

    def with_entries(self, entries):
        return replace(self, entries=tuple(entries))


def _onehot(labels, n_labels):
    out = np.zeros((len(labels), n_labels))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def cross_entropy(pred, rows, targets):
    """``-sum log pred[rows, targets]`` via a one-hot mask."""
    if not len(rows):
        return Tensor(0.0)
    picked = ad.take_rows(pred, rows)
    mask = Tensor(_onehot(targets, pred.shape[1]))
    return ad.scalar_mul(ad.sum_(ad.hadamard(mask, ad.log(picked))), -1.0)


def expert_loss(pred_l, pred_c, labels, split, rows):
    """Summed cross-entropy of both heads against the labeled entities of ``split``.

    ``rows`` maps entity id to its row in the prediction matrices.
    """
    total = None
    for source, pred in (("liberal", pred_l), ("conservative", pred_c)):
        entries = labels.select(source, split)
        missing = [e.entity for e in entries if e.entity not in rows]
        if missing:
            raise CoverageError(f"no {source} prediction for labeled entity {missing[0]!r}")
        term = cross_entropy(pred, [rows[e.entity] for e in entries], [e.label for e in entries])
        total = term if total is None else ad.add(total, term)
    return total


def consistency_labels(pred_l, pred_c, n_labels=None):
    """One-hot targets from the opposite head with the class index reversed.

    Liberal target of row i is ``(D-1) - argmax(conservative_i)`` and vice
    versa; argmax ties go to the lowest index.
    """
    pl = pred_l.value if isinstance(pred_l, Tensor) else np.asarray(pred_l)
    pc = pred_c.value if isinstance(pred_c, Tensor) else np.asarray(pred_c)
    d = n_labels or pl.shape[1]
    lib = _onehot(d - 1 - np.argmax(pc, axis=1), d)
    con = _onehot(d - 1 - np.argmax(pl, axis=1), d)
    return lib, con


def consistency_loss(pred_l, pred_c, lib_target, con_target):
    """Cross-entropy of each head against its gradient-stopped reversed target."""
    lt, ct = Tensor(lib_target), Tensor(con_target)
    both = ad.add(ad.sum_(ad.hadamard(lt, ad.log(pred_l))),
                  ad.sum_(ad.hadamard(ct, ad.log(pred_c))))
    return ad.scalar_mul(both, -1.0)


def echo_pairs(hin, k_neg, rng, nodes=None):
    """Positive (i, j) pairs over neighbors and ``k_neg`` sampled negatives per node.

    Negatives are drawn node by node in ascending index order.
    """
    nodes = range(hin.num_nodes) if nodes is None else nodes
    pos_i, pos_j, neg_i, neg_j = [], [], [], []
    for i in nodes:
        p = hin.positive_indices(i)
        pos_i.extend([i] * p.size)
        pos_j.extend(p.tolist())
        if k_neg:
            n = hin.negative_indices(i, k_neg, rng)
            neg_i.extend([i] * n.size)
            neg_j.extend(n.tolist())
    as_idx = lambda a: np.array(a, dtype=np.intp)
    return as_idx(pos_i), as_idx(pos_j), as_idx(neg_i), as_idx(neg_j)


def _pair_logits(emb, i, j):
    return ad.sum_(ad.hadamard(ad.take_rows(emb, i), ad.take_rows(emb, j)), axis=1)


def echo_chamber_loss(emb, hin, k_neg, q, rng, nodes=None, pairs=None):
    """``-sum log sig(x_i.x_j)`` over neighbors minus ``q * sum log sig(-x_i.x_j)`` over negatives.

    ``pairs`` (as returned by :func:`echo_pairs`) freezes the sample; ``rng`` is then unused.
    """
    if k_neg < 0 or q < 0:
        raise ConfigError("k_neg and q must be non-negative")
    pos_i, pos_j, neg_i, neg_j = pairs if pairs is not None else echo_pairs(hin, k_neg, rng, nodes)
    loss = Tensor(0.0)
    if pos_i.size:
        z = _pair_logits(emb, pos_i, pos_j)
        loss = ad.scalar_mul(ad.sum_(ad.log(ad.sigmoid(z))), -1.0)
    if neg_i.size and q > 0:
        z = _pair_logits(emb, neg_i, neg_j)
        neg = ad.scalar_mul(ad.sum_(ad.log(ad.sigmoid(ad.scalar_mul(z, -1.0)))), -q)
        loss = ad.add(loss, neg)
    return loss


@dataclass
class LossBreakdown:
    l1: float
    l2: float
    l3: float
    l2reg: float
    total: float
    weights: tuple = (1.0, 0.2, 0.1, 1e-5)
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        out = {"l1": self.l1, "l2": self.l2, "l3": self.l3, "l2reg": self.l2reg, "total": self.total}
        for k, lam in enumerate(self.weights, start=1):
            out[f"lambda{k}"] = lam
        out.update(self.extra)
        return out


def weight_penalty(params):
    total = Tensor(0.0)
    for t in params:
        total = ad.add(total, ad.sum_squares(t))
    return total


def total_loss(l1, l2, l3, params, weights=(1.0, 0.2, 0.1, 1e-5), **extra):
    """Weighted sum ``l1*w1 + l2*w2 + l3*w3 + w4*sum(theta^2)``.

    Returns the scalar Tensor and a :class:`LossBreakdown` of unweighted parts.
    """
    if len(weights) != 4 or any(w < 0 for w in weights):
        raise ConfigError(f"loss weights must be four non-negative numbers, got {weights}")
    reg = weight_penalty(params)
    total = ad.scalar_mul(l1, weights[0])
    for part, w in ((l2, weights[1]), (l3, weights[2]), (reg, weights[3])):
        total = ad.add(total, ad.scalar_mul(part, w))
    breakdown = LossBreakdown(l1=float(l1.value), l2=float(l2.value), l3=float(l3.value),
                              l2reg=float(reg.value), total=float(total.value),
                              weights=tuple(float(w) for w in weights), extra=extra)
    return total, breakdown
