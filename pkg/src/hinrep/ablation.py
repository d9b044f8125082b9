"""One-factor-at-a-time ablation grid over losses, structure, context edges and labels.

A grid spec is a ``;``-separated list of axes, each either a bare axis name
(default values) or ``name=v1,v2,...``::

    loss;layers=0,1,2;drop_rel=R1,R5;label_frac=liberal:0.5,both:1

Every value of every axis is one cell: the base config with that single
change.  Each cell is trained once per seed and scored on the test split.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .data_io import load_dataset
from .errors import ConfigError
from .hin import RelationKind
from .objectives import SOURCES
from .training import TrainConfig, evaluate, make_splits, train

LOSS_COMBOS = {
    "L1": (True, False, False),
    "L1+L2": (True, True, False),
    "L1+L3": (True, False, True),
    "L1+L2+L3": (True, True, True),
}

AXIS_DEFAULTS = {
    "loss": ("L1", "L1+L2", "L1+L3", "L1+L2+L3"),
    "layers": ("0", "1", "2", "3", "4"),
    "drop_rel": tuple(r.value for r in RelationKind),
    "edge_frac": ("1.0", "0.75", "0.5", "0.25", "0.0"),
    "label_frac": ("both:1.0", "both:0.75", "both:0.5", "both:0.25"),
    "k_neg": ("1", "2", "4", "8"),
    "q": ("0.0", "0.1", "0.2", "0.5"),
    "lambda2": ("0.0", "0.1", "0.2", "0.3", "0.5"),
    "lambda3": ("0.0", "0.01", "0.1", "0.5"),
}

METRICS = ("accuracy", "macro_f1", "micro_f1", "consistency")


@dataclass(frozen=True)
class Cell:
    axis: str
    value: str

    @property
    def label(self):
        return f"{self.axis}={self.value}"


def _fraction(text, what):
    try:
        f = float(text)
    except ValueError:
        raise ConfigError(f"{what}: {text!r} is not a number") from None
    if not 0.0 <= f <= 1.0:
        raise ConfigError(f"{what}: {f} outside [0, 1]")
    return f


def _check_value(axis, value):
    if axis == "loss":
        if value not in LOSS_COMBOS:
            raise ConfigError(f"loss combination {value!r} not in {sorted(LOSS_COMBOS)}")
    elif axis in ("layers", "k_neg"):
        if not value.isdigit():
            raise ConfigError(f"{axis} value {value!r} must be a non-negative integer")
    elif axis == "drop_rel":
        if value not in {r.value for r in RelationKind}:
            raise ConfigError(f"drop_rel value {value!r} is not a relation R1..R5")
    elif axis == "edge_frac":
        _fraction(value, "edge_frac")
    elif axis == "label_frac":
        source, sep, frac = value.partition(":")
        if not sep or source not in SOURCES + ("both",):
            raise ConfigError(f"label_frac value {value!r} must look like liberal:0.5 or both:1")
        _fraction(frac, "label_frac")
    else:  # q, lambda2, lambda3
        try:
            f = float(value)
        except ValueError:
            raise ConfigError(f"{axis} value {value!r} is not a number") from None
        if not f >= 0:
            raise ConfigError(f"{axis} value {value!r} must be non-negative")


def parse_grid(spec):
    """Parse a grid spec into an ordered list of :class:`Cell`; raises ConfigError."""
    if spec is None or not spec.strip():
        raise ConfigError("empty grid spec")
    cells = []
    seen = set()
    for part in spec.split(";"):
        part = part.strip()
        if not part:
            raise ConfigError(f"empty axis in grid spec {spec!r}")
        name, sep, values = part.partition("=")
        name = name.strip()
        if name not in AXIS_DEFAULTS:
            raise ConfigError(f"unknown grid axis {name!r}; known: {', '.join(AXIS_DEFAULTS)}")
        if name in seen:
            raise ConfigError(f"grid axis {name!r} given twice")
        seen.add(name)
        if sep:
            vals = [v.strip() for v in values.split(",")]
            if not values.strip() or any(not v for v in vals):
                raise ConfigError(f"axis {name!r} has an empty value list")
        else:
            vals = list(AXIS_DEFAULTS[name])
        for v in vals:
            _check_value(name, v)
            cells.append(Cell(name, v))
    return cells


def parse_seeds(text):
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"seeds must be comma-separated integers, got {text!r}") from None
    if not seeds:
        raise ConfigError("no seeds given")
    return seeds


def _subsample_labels(labels, source, frac, seed):
    """Keep ``floor(frac * n)`` training labels per affected source; val/test untouched."""
    rng = np.random.default_rng([seed, 5])
    drop = set()
    for src in SOURCES:
        if source not in (src, "both"):
            continue
        train_entries = sorted(labels.select(src, "train"), key=lambda e: e.entity)
        n_keep = int(np.floor(round(frac * len(train_entries), 9)))
        order = rng.permutation(len(train_entries))
        drop.update((train_entries[k].entity, src) for k in order[n_keep:])
    return labels.with_entries(e for e in labels.entries if (e.entity, e.source) not in drop)


def apply_cell(hin, labels, config, cell, seed):
    """``(hin, labels, config)`` for one cell; labels come back with splits assigned."""
    config = config.replace(seed=seed)
    labels = make_splits(labels, config.split_ratio, seed)
    axis, value = cell.axis, cell.value
    if axis == "loss":
        _, use2, use3 = LOSS_COMBOS[value]
        config = config.replace(lambda2=config.lambda2 if use2 else 0.0,
                                lambda3=config.lambda3 if use3 else 0.0)
    elif axis == "layers":
        config = config.replace(n_layers=int(value))
    elif axis == "k_neg":
        config = config.replace(k_neg=int(value))
    elif axis in ("q", "lambda2", "lambda3"):
        config = config.replace(**{axis: float(value)})
    elif axis == "drop_rel":
        hin = hin.drop_relation([value])
    elif axis == "edge_frac":
        kept = float(value)
        hin = hin.drop_edge_fraction(1.0 - kept, np.random.default_rng([seed, 3]))
    elif axis == "label_frac":
        source, _, frac = value.partition(":")
        labels = _subsample_labels(labels, source, float(frac), seed)
    return hin, labels, config


@lru_cache(maxsize=2)
def _dataset(path):
    return load_dataset(path)


def run_cell(data_path, config_dict, cell, seed):
    """Train one (cell, seed) and return its test metrics; safe to run in a worker process."""
    hin, labels = _dataset(str(data_path))
    config = TrainConfig.from_dict(config_dict)
    hin, labels, config = apply_cell(hin, labels, config, cell, seed)
    result = train(hin, labels, config)
    report = evaluate(result.params, hin, result.labels, "test")
    return {
        "axis": cell.axis, "value": cell.value, "seed": seed,
        "accuracy": report.harmonic["accuracy"],
        "macro_f1": report.harmonic["macro_f1"],
        "micro_f1": report.harmonic["micro_f1"],
        "consistency": report.consistency_rate,
        "best_epoch": result.best_epoch,
    }


def run_grid(data_path, config, cells, seeds, workers=None):
    """Run every (cell, seed); results come back in grid order regardless of scheduling."""
    jobs = [(cell, seed) for cell in cells for seed in seeds]
    cfg = config.to_dict()
    workers = workers or os.cpu_count() or 1
    if workers == 1:
        return [run_cell(data_path, cfg, cell, seed) for cell, seed in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(run_cell, data_path, cfg, cell, seed) for cell, seed in jobs]
        return [f.result() for f in futures]


def summarize_runs(runs, cells):
    """Mean and sample standard deviation (0 for a single seed) of each metric per cell."""
    rows = []
    for cell in cells:
        mine = [r for r in runs if r["axis"] == cell.axis and r["value"] == cell.value]
        row = {"axis": cell.axis, "value": cell.value, "n_seeds": len(mine)}
        for m in METRICS:
            vals = np.array([r[m] for r in mine])
            row[f"{m}_mean"] = float(vals.mean())
            row[f"{m}_std"] = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
        rows.append(row)
    return rows


def write_summary(path, rows):
    fields = ["axis", "value", "n_seeds"] + [f"{m}_{s}" for m in METRICS for s in ("mean", "std")]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in row.items()})
