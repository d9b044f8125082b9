"""Optimization loop, label splits, evaluation metrics and cluster quality."""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tape
from .errors import ConfigError, EvaluationError, NumericalError, SplitError
from .hin import RelationKind
from .model import forward, init_params, stance_heads
from .objectives import (SOURCES, consistency_labels, consistency_loss, echo_chamber_loss,
                         expert_loss, total_loss)

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")


@dataclass
class TrainConfig:
    d_hidden: int = 512
    n_layers: int = 2
    n_labels: int = 5
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    max_epochs: int = 100
    lambda1: float = 1.0
    lambda2: float = 0.2
    lambda3: float = 0.1
    lambda4: float = 1e-5
    q: float = 0.1
    k_neg: int = 2
    activation: str = "leaky_relu"
    gated: bool = True
    split_ratio: tuple = (0.7, 0.2, 0.1)
    seed: int = 0
    batch_size: Optional[int] = None
    stance_scope: str = "actors"
    echo_scope: str = "all"

    def __post_init__(self):
        self.split_ratio = tuple(float(r) for r in self.split_ratio)
        for name in ("d_hidden", "n_labels", "max_epochs"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.n_layers < 0 or self.k_neg < 0:
            raise ConfigError("n_layers and k_neg must be non-negative")
        for name in ("lr", "adam_eps"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("lambda1", "lambda2", "lambda3", "lambda4", "q"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("Adam betas must lie in [0, 1)")
        if len(self.split_ratio) != 3 or min(self.split_ratio) <= 0 \
                or abs(sum(self.split_ratio) - 1.0) > 1e-9:
            raise ConfigError(f"split_ratio must be three positive numbers summing to 1, got {self.split_ratio}")
        if self.activation not in ad.ACTIVATIONS:
            raise ConfigError(f"activation must be one of {sorted(ad.ACTIVATIONS)}")
        if self.batch_size is not None and self.batch_size <= 0:
            raise ConfigError("batch_size must be positive or null")
        if self.stance_scope not in ("actors", "all") or self.echo_scope not in ("actors", "all"):
            raise ConfigError("stance_scope and echo_scope must be 'actors' or 'all'")

    @property
    def weights(self):
        return (self.lambda1, self.lambda2, self.lambda3, self.lambda4)

    def to_dict(self):
        d = asdict(self)
        d["split_ratio"] = list(self.split_ratio)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def replace(self, **changes):
        return TrainConfig.from_dict({**self.to_dict(), **changes})

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:10]


# ---------------------------------------------------------------- splits


def _round_half_up(x):
    return int(math.floor(x + 0.5))


def make_splits(labels, ratio=(0.7, 0.2, 0.1), seed=0):
    """Shuffle each source independently into train/val/test.

    Validation and test sizes are rounded to the nearest integer; the
    remainder goes to train.  777 entries at 7:2:1 split 544/155/78.
    """
    if len(ratio) != 3 or min(ratio) <= 0:
        raise SplitError(f"ratio must be a positive triple, got {ratio}")
    total = sum(ratio)
    r_val, r_test = ratio[1] / total, ratio[2] / total
    rng = np.random.default_rng(seed)
    assigned = {}
    for source in SOURCES:
        entries = sorted(labels.select(source), key=lambda e: e.entity)
        n = len(entries)
        if n == 0:
            continue
        if n < 3:
            raise SplitError(f"{source}: {n} labeled entries, need at least 3")
        n_val, n_test = _round_half_up(n * r_val), _round_half_up(n * r_test)
        perm = rng.permutation(n)
        for rank, k in enumerate(perm):
            split = "val" if rank < n_val else "test" if rank < n_val + n_test else "train"
            assigned[(entries[k].entity, source)] = split
    return labels.with_entries(
        type(e)(e.entity, e.source, e.score, e.label, assigned[(e.entity, e.source)])
        for e in labels.entries)


# ---------------------------------------------------------------- optimizer


class Adam:
    """Bias-corrected Adam over a collection of Tensors; zeroes grads after each step."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]
        self.t = 0

    def step(self):
        for p in self.params:
            if not ad.all_finite(p.grad):
                raise NumericalError(f"non-finite gradient for {p.name or 'parameter'}")
        self.t += 1
        # bias corrections folded into scalars: lr_t * m / (sqrt(v) + eps_t)
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        lr_t = self.lr * math.sqrt(bc2) / bc1
        eps_t = self.eps * math.sqrt(bc2)
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            np.square(g, out=g)
            g *= 1.0 - self.beta2
            v += g
            # g is reused as scratch for the step
            np.sqrt(v, out=g)
            g += eps_t
            np.divide(m, g, out=g)
            g *= lr_t
            p.value -= g
            g.fill(0.0)


# ---------------------------------------------------------------- metrics


def harmonic_mean(a, b):
    return 0.0 if a + b == 0 else 2 * a * b / (a + b)


def classification_metrics(gold, pred):
    """Accuracy, macro-F1 and micro-F1 for single-label multi-class predictions.

    Macro-F1 averages over classes present in gold or predictions.
    """
    gold = np.asarray(gold)
    pred = np.asarray(pred)
    if gold.size == 0:
        raise EvaluationError("no labeled entries to evaluate")
    acc = float(np.mean(gold == pred))
    f1s = []
    for c in np.union1d(gold, pred):
        tp = np.sum((pred == c) & (gold == c))
        fp = np.sum((pred == c) & (gold != c))
        fn = np.sum((pred != c) & (gold == c))
        f1s.append(0.0 if tp == 0 else 2 * tp / (2 * tp + fp + fn))
    # one label per entry, so global precision = recall = accuracy
    return {"accuracy": acc, "macro_f1": float(np.mean(f1s)), "micro_f1": acc}


def consistency_rate(pred_l, pred_c):
    d = pred_l.shape[1]
    return float(np.mean(np.argmax(pred_l, axis=1) == d - 1 - np.argmax(pred_c, axis=1)))


@dataclass
class EvalReport:
    split: str
    liberal: dict
    conservative: dict
    harmonic: dict
    consistency_rate: float
    counts: dict = field(default_factory=dict)
    dbi: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def report_from_predictions(pl, pc, rows, labels, split):
    """Build an :class:`EvalReport` from detached prediction matrices."""
    per_source = {}
    counts = {}
    for source, pred in (("liberal", pl), ("conservative", pc)):
        entries = labels.select(source, split)
        if not entries:
            raise EvaluationError(f"split {split!r} has no {source} labels")
        idx = [rows[e.entity] for e in entries]
        per_source[source] = classification_metrics([e.label for e in entries],
                                                     np.argmax(pred[idx], axis=1))
        counts[source] = len(entries)
    harmonic = {k: harmonic_mean(per_source["liberal"][k], per_source["conservative"][k])
                for k in per_source["liberal"]}
    return EvalReport(split=split, liberal=per_source["liberal"],
                      conservative=per_source["conservative"], harmonic=harmonic,
                      consistency_rate=consistency_rate(pl, pc), counts=counts)


def stance_rows(hin, scope="actors"):
    idx = hin.actor_indices if scope == "actors" else np.arange(hin.num_nodes)
    return idx, {hin.nodes[i].id: k for k, i in enumerate(idx)}


def evaluate(params, hin, labels, split, groupings=None):
    """Metrics of the model's argmax stances on ``split``.

    ``groupings`` optionally maps a name to a ``{node id: group}`` dict;
    the Davies-Bouldin index of the embeddings under each is reported.
    """
    x = forward(params, hin)
    idx, rows = stance_rows(hin)
    pl, pc = stance_heads(params, ad.take_rows(x, idx))
    report = report_from_predictions(pl.value, pc.value, rows, labels, split)
    for name, grouping in (groupings or {}).items():
        report.dbi[name] = dbi(x.value, grouping, hin.ids)
    return report


def majority_baseline(labels, fit_split=None, eval_split=None):
    """Harmonic-mean accuracy of always predicting the most frequent class.

    By default the class is fitted and scored on every labeled entry.
    """
    accs = []
    for source in SOURCES:
        fit = [e.label for e in labels.select(source, fit_split)]
        score = [e.label for e in labels.select(source, eval_split)]
        if not fit or not score:
            raise EvaluationError(f"no {source} labels for the majority baseline")
        top = np.bincount(fit).argmax()
        accs.append(float(np.mean(np.array(score) == top)))
    return harmonic_mean(*accs)


# ---------------------------------------------------------------- clustering


def dbi(emb, grouping, ids=None):
    """Davies-Bouldin index of ``emb`` rows under ``grouping`` (node id -> group).

    ``emb`` is an array row-aligned with ``ids`` or an EmbeddingTable.
    Nodes missing from ``grouping`` are ignored.  Coincident centroids of
    two distinct groups give ``inf``.
    """
    if ids is None:
        ids, emb = emb.ids, emb.values
    emb = np.asarray(emb, dtype=np.float64)
    members = {}
    for row, node in enumerate(ids):
        if node in grouping:
            members.setdefault(grouping[node], []).append(row)
    if len(members) < 2:
        raise EvaluationError("Davies-Bouldin index needs at least two non-empty groups")
    groups = sorted(members, key=str)
    cents = np.array([emb[members[g]].mean(axis=0) for g in groups])
    scatter = np.array([np.linalg.norm(emb[members[g]] - c, axis=1).mean()
                        for g, c in zip(groups, cents)])
    k = len(groups)
    worst = np.zeros(k)
    for a in range(k):
        for b in range(k):
            if a == b:
                continue
            d = np.linalg.norm(cents[a] - cents[b])
            if d == 0:
                return math.inf
            worst[a] = max(worst[a], (scatter[a] + scatter[b]) / d)
    return float(worst.mean())


def party_grouping(hin):
    """Partisan actors grouped by the party they are affiliated with."""
    out = {}
    for e in hin.edges:
        if e.rel == RelationKind.PARTY_AFFILIATION:
            out[e.src] = e.dst
    return out


def kind_grouping(hin):
    return {n.id: n.kind.value for n in hin.nodes}


def label_grouping(labels, source="liberal"):
    return {e.entity: e.label for e in labels.select(source)}


def random_grouping(grouping, seed):
    """Same members and group sizes as ``grouping``, with group names shuffled across members."""
    members = sorted(grouping)
    names = [grouping[m] for m in members]
    perm = np.random.default_rng(seed).permutation(len(members))
    return {m: names[k] for m, k in zip(members, perm)}


# ---------------------------------------------------------------- training


@dataclass
class TrainResult:
    params: object
    log: list
    best_epoch: int
    best_report: EvalReport
    config: TrainConfig
    labels: object = None  # labels with the split assignment used for training


def _ensure_splits(labels, config):
    if all(e.split in SPLITS for e in labels.entries):
        return labels
    return make_splits(labels, config.split_ratio, config.seed)


def _epoch_step(params, hin, labels, config, epoch, rows_idx, rows, l1_split, l1_labels):
    rng = np.random.default_rng([config.seed, epoch])
    echo_nodes = None if config.echo_scope == "all" else hin.actor_indices
    with Tape() as tape:
        x = forward(params, hin)
        pl, pc = stance_heads(params, ad.take_rows(x, rows_idx))
        l1 = expert_loss(pl, pc, l1_labels, l1_split, rows)
        lt, ct = consistency_labels(pl, pc, config.n_labels)
        l2 = consistency_loss(pl, pc, lt, ct)
        l3 = echo_chamber_loss(x, hin, config.k_neg, config.q, rng, nodes=echo_nodes)
        total, parts = total_loss(l1, l2, l3, params, config.weights,
                                  q=config.q, k_neg=config.k_neg)
    tape.backward(total)
    if not math.isfinite(parts.total):
        raise NumericalError(f"epoch {epoch}: non-finite loss")
    return pl.value, pc.value, parts


def train(hin, labels, config, params=None, on_epoch=None):
    """Full-graph Adam training with best-epoch selection on validation accuracy.

    Each log record holds the losses of the parameters entering that epoch
    and their validation metrics; the returned parameters are those of the
    epoch with the highest validation harmonic-mean accuracy (earliest on
    ties).
    """
    labels = _ensure_splits(labels, config)
    if params is None:
        params = init_params(hin.feature_dim, config.d_hidden, config.n_layers, config.n_labels,
                             config.seed, gated=config.gated, activation=config.activation)
    rows_idx, rows = stance_rows(hin, config.stance_scope)
    opt = Adam(params, config.lr, config.beta1, config.beta2, config.adam_eps)
    batch_rng = np.random.default_rng([config.seed, 2**31])

    history = []
    best_acc, best_epoch, best_values, best_report = -1.0, -1, None, None
    for epoch in range(config.max_epochs):
        if config.batch_size is None:
            batches = [(labels, "train")]
        else:
            batches = [(b, "batch") for b in _minibatches(labels, config.batch_size, batch_rng)]
        parts_sum = None
        for k, (l1_labels, l1_split) in enumerate(batches):
            try:
                pl, pc, parts = _epoch_step(params, hin, labels, config, epoch,
                                            rows_idx, rows, l1_split, l1_labels)
            except NumericalError as exc:
                raise NumericalError(f"epoch {epoch}: {exc}") from exc
            if k == 0:
                # metrics describe the parameters entering this epoch
                report = report_from_predictions(pl, pc, rows, labels, "val")
                if report.harmonic["accuracy"] > best_acc:
                    best_acc, best_epoch = report.harmonic["accuracy"], epoch
                    best_values, best_report = params.snapshot(), report
            _step(opt, epoch)
            d = parts.to_dict()
            parts_sum = d if parts_sum is None else {key: parts_sum[key] + d[key] for key in d}

        record = {"epoch": epoch}
        record.update({key: v / len(batches) for key, v in parts_sum.items()}
                      if len(batches) > 1 else parts_sum)
        record["val_accuracy"] = report.harmonic["accuracy"]
        record["val_macro_f1"] = report.harmonic["macro_f1"]
        record["val_micro_f1"] = report.harmonic["micro_f1"]
        record["val_consistency"] = report.consistency_rate
        history.append(record)
        if on_epoch is not None:
            on_epoch(record)
        log.debug("epoch %d total %.6f val acc %.4f", epoch, record["total"], record["val_accuracy"])

    params.restore(best_values)
    return TrainResult(params, history, best_epoch, best_report, config, labels)


def _step(opt, epoch):
    try:
        opt.step()
    except NumericalError as exc:
        raise NumericalError(f"epoch {epoch}: {exc}") from exc


def _minibatches(labels, batch_size, rng):
    """Train-split labels reshuffled into batches; each batch is relabeled split 'batch'."""
    train = labels.select(split="train")
    order = rng.permutation(len(train))
    batches = []
    for start in range(0, len(train), batch_size):
        chunk = [train[k] for k in order[start:start + batch_size]]
        batches.append(labels.with_entries(
            type(e)(e.entity, e.source, e.score, e.label, "batch") for e in chunk))
    return batches or [labels.with_entries([])]
