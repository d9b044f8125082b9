"""Gated relational GCN encoder with liberal/conservative stance heads."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, DataError, DimensionError
from .hin import RelationKind

RELATIONS = tuple(RelationKind)


@dataclass
class ModelParams:
    """All learnable tensors plus the architecture they belong to.

    Tensor names:

    - ``input.W`` (d_hidden x d_in), ``input.b``
    - ``layers.{l}.{R1..R5}.W/b`` relation transforms, ``layers.{l}.self.W/b``
    - ``layers.{l}.gate.W`` (d_hidden x 2 d_hidden), ``layers.{l}.gate.b``
    - ``head_liberal.W/b`` and ``head_conservative.W/b`` (n_labels x d_hidden)
    """

    d_in: int
    d_hidden: int
    n_layers: int
    n_labels: int
    gated: bool = True
    activation: str = "leaky_relu"
    tensors: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.tensors[name]

    def __iter__(self):
        return iter(self.tensors.values())

    def items(self):
        return self.tensors.items()

    @property
    def n_entries(self):
        return sum(t.value.size for t in self.tensors.values())

    def zero_grad(self):
        for t in self.tensors.values():
            t.zero_grad()

    def arch(self):
        return {"d_in": self.d_in, "d_hidden": self.d_hidden, "n_layers": self.n_layers,
                "n_labels": self.n_labels, "gated": self.gated, "activation": self.activation}

    def snapshot(self):
        return {k: t.value.copy() for k, t in self.tensors.items()}

    def restore(self, values):
        for k, t in self.tensors.items():
            t.value[...] = values[k]
            t.zero_grad()

    def copy(self):
        out = ModelParams(**self.arch())
        out.tensors = {k: Tensor(t.value, requires_grad=True, name=k) for k, t in self.tensors.items()}
        return out


def param_shapes(d_in, d_hidden, n_layers, n_labels):
    shapes = {"input.W": (d_hidden, d_in), "input.b": (d_hidden,)}
    for l in range(n_layers):
        for rel in RELATIONS:
            shapes[f"layers.{l}.{rel.value}.W"] = (d_hidden, d_hidden)
            shapes[f"layers.{l}.{rel.value}.b"] = (d_hidden,)
        shapes[f"layers.{l}.self.W"] = (d_hidden, d_hidden)
        shapes[f"layers.{l}.self.b"] = (d_hidden,)
        shapes[f"layers.{l}.gate.W"] = (d_hidden, 2 * d_hidden)
        shapes[f"layers.{l}.gate.b"] = (d_hidden,)
    for head in ("head_liberal", "head_conservative"):
        shapes[f"{head}.W"] = (n_labels, d_hidden)
        shapes[f"{head}.b"] = (n_labels,)
    return shapes


def init_params(d_in, d_hidden, n_layers, n_labels, seed, gated=True, activation="leaky_relu"):
    """Glorot-uniform weights and zero biases, deterministic per seed."""
    for name, v in (("d_in", d_in), ("d_hidden", d_hidden), ("n_labels", n_labels)):
        if v <= 0:
            raise ConfigError(f"{name} must be positive, got {v}")
    if n_layers < 0:
        raise ConfigError(f"n_layers must be non-negative, got {n_layers}")
    if activation not in ad.ACTIVATIONS:
        raise ConfigError(f"unknown activation {activation!r}")
    rng = np.random.default_rng(seed)
    params = ModelParams(d_in, d_hidden, n_layers, n_labels, gated, activation)
    for name, shape in param_shapes(d_in, d_hidden, n_layers, n_labels).items():
        if len(shape) == 2:
            fan_out, fan_in = shape
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            value = rng.uniform(-bound, bound, size=shape)
        else:
            value = np.zeros(shape)
        params.tensors[name] = Tensor(value, requires_grad=True, name=name)
    return params


def linear(x, W, b):
    return ad.affine(x, W, b)


def _activate(params, x):
    return ad.ACTIVATIONS[params.activation](x)


def input_transform(params, features):
    if not isinstance(features, Tensor):
        features = Tensor(features)
    if features.ndim != 2 or features.shape[1] != params.d_in:
        raise DimensionError(f"features {features.shape} do not match d_in={params.d_in}")
    return _activate(params, linear(features, params["input.W"], params["input.b"]))


def aggregate(params, layer, hin, x_prev):
    """Self transform plus per-relation neighbor means of transformed states.

    A relation under which a node has no neighbors contributes nothing.
    """
    p = f"layers.{layer}"
    u = linear(x_prev, params[f"{p}.self.W"], params[f"{p}.self.b"])
    for rel in RELATIONS:
        cols, A = hin.message_sources(rel)
        if cols.size == 0:
            continue
        # only nodes that are someone's neighbor under rel send messages
        src = ad.take_rows(x_prev, cols)
        msg = linear(src, params[f"{p}.{rel.value}.W"], params[f"{p}.{rel.value}.b"])
        u = ad.add(u, ad.sparse_matmul(A, msg))
    return u


def rgcn_layer(params, layer, hin, x_prev):
    """One gated layer: ``tanh(u) * g + x_prev * (1 - g)``."""
    if x_prev.shape != (hin.num_nodes, params.d_hidden):
        raise DimensionError(f"x_prev {x_prev.shape} != ({hin.num_nodes}, {params.d_hidden})")
    u = aggregate(params, layer, hin, x_prev)
    p = f"layers.{layer}"
    g = ad.sigmoid(linear(ad.concat(u, x_prev), params[f"{p}.gate.W"], params[f"{p}.gate.b"]))
    keep = ad.add_scalar(ad.scalar_mul(g, -1.0), 1.0)
    return ad.add(ad.hadamard(ad.tanh(u), g), ad.hadamard(x_prev, keep))


def ungated_layer(params, layer, hin, x_prev):
    """Plain relational layer: the activation applied to the aggregate."""
    if x_prev.shape != (hin.num_nodes, params.d_hidden):
        raise DimensionError(f"x_prev {x_prev.shape} != ({hin.num_nodes}, {params.d_hidden})")
    return _activate(params, aggregate(params, layer, hin, x_prev))


def forward(params, hin):
    """Final node representations, an ``n x d_hidden`` Tensor."""
    x = input_transform(params, hin.features)
    step = rgcn_layer if params.gated else ungated_layer
    for layer in range(params.n_layers):
        x = step(params, layer, hin, x)
    return x


def stance_heads(params, x):
    """Row-wise liberal and conservative stance distributions for states ``x``."""
    lib = ad.softmax(linear(x, params["head_liberal.W"], params["head_liberal.b"]))
    con = ad.softmax(linear(x, params["head_conservative.W"], params["head_conservative.b"]))
    return lib, con


def predict_stances(params, emb, hin, entities):
    """Stance distributions for ``entities`` (ids), one row each, in the given order."""
    rows = [hin.index(e) for e in entities]
    return stance_heads(params, ad.take_rows(emb, rows))


@dataclass
class EmbeddingTable:
    """Detached final representations, row-aligned with ``ids``."""

    ids: tuple
    values: np.ndarray

    def row(self, entity):
        return self.values[self.ids.index(entity)]


def embed(params, hin):
    return EmbeddingTable(hin.ids, forward(params, hin).value.copy())


# ---------------------------------------------------------------- checkpoints


def save_checkpoint(path, params, config=None):
    doc = {
        "config": config or {},
        "arch": params.arch(),
        "tensors": {k: {"shape": list(t.shape), "values": t.value.ravel().tolist()}
                    for k, t in params.items()},
    }
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path):
    """Return ``(params, config)``; shapes are checked against the stored architecture."""
    try:
        doc = json.loads(Path(path).read_text())
        arch = doc["arch"]
        stored = doc["tensors"]
    except (OSError, ValueError, KeyError) as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    expected = param_shapes(arch["d_in"], arch["d_hidden"], arch["n_layers"], arch["n_labels"])
    if set(stored) != set(expected):
        raise DataError(f"checkpoint {path}: tensor names do not match the architecture")
    params = ModelParams(**arch)
    for name, shape in expected.items():
        entry = stored[name]
        if tuple(entry["shape"]) != shape or len(entry["values"]) != int(np.prod(shape)):
            raise DataError(f"checkpoint {path}: {name} has shape {entry['shape']}, expected {list(shape)}")
        value = np.array(entry["values"], dtype=np.float64).reshape(shape)
        params.tensors[name] = Tensor(value, requires_grad=True, name=name)
    return params, doc.get("config", {})
