"""Minimal reverse-mode differentiation over dense float64 arrays.

Operations executed while a :class:`Tape` is active are recorded together
with a closure mapping the output gradient to input gradients.  Replaying
the tape in reverse accumulates ``d loss / d t`` into ``t.grad`` for every
tensor that requires a gradient.

    w = Tensor([1.0, 2.0], requires_grad=True)
    with Tape() as tape:
        loss = sum_(hadamard(w, w))
    tape.backward(loss)
    w.grad  # array([2., 4.])

A tape is single-use; calling ``backward`` on it twice raises
:class:`TapeError`.  Outside a tape, operations just compute values.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .errors import DeterminismError, DimensionError, NumericalError, TapeError

LOG_FLOOR = 1e-12
LEAKY_SLOPE = 0.01

_local = threading.local()


def _tape_stack():
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def active_tape():
    stack = _tape_stack()
    return stack[-1] if stack else None


def all_finite(value):
    # a finite sum implies finite entries; only an overflowing sum needs the full scan
    if math.isfinite(value.sum()):
        return True
    return bool(np.all(np.isfinite(value)))


def _check_finite(value, op):
    if not all_finite(value):
        raise NumericalError(f"non-finite value produced by {op}")


class Tensor:
    """Dense array of float64 with an optional gradient accumulator."""

    __slots__ = ("value", "requires_grad", "grad", "name", "_tape")

    def __init__(self, value, requires_grad=False, name=None):
        value = np.array(value, dtype=np.float64)
        if value.ndim > 2:
            raise DimensionError(f"tensors are at most 2-d, got shape {value.shape}")
        _check_finite(value, f"Tensor({name or ''})")
        self.value = value
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(value) if requires_grad else None
        self.name = name
        self._tape = None

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def item(self):
        return float(self.value)

    def numpy(self):
        return self.value.copy()

    def zero_grad(self):
        if self.requires_grad:
            self.grad = np.zeros_like(self.value)

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __sub__(self, other):
        return add(self, scalar_mul(_as_tensor(other), -1.0))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scalar_mul(self, other)
        return hadamard(self, _as_tensor(other))

    __rmul__ = __mul__

    def __neg__(self):
        return scalar_mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))

    @property
    def T(self):
        return transpose(self)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(value, inputs, backward_fn, op):
    """Wrap an op output and record it on the active tape."""
    _check_finite(value, op)
    out = Tensor.__new__(Tensor)
    out.value = value
    out.name = None
    out.grad = None
    out._tape = None
    out.requires_grad = any(t.requires_grad for t in inputs)
    if out.requires_grad:
        tape = active_tape()
        if tape is not None:
            tape._record(out, inputs, backward_fn)
    return out


class Tape:
    """Ordered record of executed operations for one backward pass."""

    def __init__(self):
        self.records = []
        self.used = False

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc):
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()
        return False

    def __len__(self):
        return len(self.records)

    def _record(self, out, inputs, backward_fn):
        if self.used:
            raise TapeError("tape already replayed; start a new tape")
        out._tape = self
        self.records.append((out, inputs, backward_fn))

    def backward(self, loss):
        if loss.value.size != 1:
            raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
        if self.used:
            raise TapeError("tape already replayed; gradients would be double-counted")
        self.used = True
        if not loss.requires_grad:
            self.records.clear()
            return
        if loss._tape is not self:
            raise TapeError("loss was not recorded on this tape")
        loss.grad = np.ones_like(loss.value)
        # Closures may hand one array to several inputs, so a grad is only
        # updated in place once this pass (or the leaf itself) owns it.
        owned = set()
        for out, inputs, backward_fn in reversed(self.records):
            if out.grad is None:
                continue
            for inp, g in zip(inputs, backward_fn(out.grad)):
                if g is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if inp.grad is None:
                    inp.grad = g
                elif key in owned or inp._tape is None:
                    inp.grad += g
                else:
                    inp.grad = inp.grad + g
                    owned.add(key)
        self.records.clear()


def backward(loss):
    """Populate gradients of every tensor reachable from ``loss``."""
    if loss.value.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._tape is None:
        if loss.requires_grad:
            raise TapeError("loss depends on parameters but was computed outside a tape")
        return
    loss._tape.backward(loss)


# ---------------------------------------------------------------- primitives


def matmul(a, b):
    if a.ndim != 2 or b.ndim not in (1, 2) or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    av, bv = a.value, b.value

    def grad(g):
        ga = gb = None
        if a.requires_grad:
            ga = g @ bv.T if bv.ndim == 2 else np.outer(g, bv)
        if b.requires_grad:
            gb = av.T @ g
        return ga, gb

    return _result(av @ bv, (a, b), grad, "matmul")


def affine(x, W, b):
    """``x @ W.T + b`` for a matrix ``x`` (rows are samples), weight ``W`` and bias vector ``b``."""
    if x.ndim != 2 or W.ndim != 2 or b.ndim != 1 or x.shape[1] != W.shape[1] \
            or b.shape[0] != W.shape[0]:
        raise DimensionError(f"affine shape mismatch: {x.shape} @ {W.shape}.T + {b.shape}")
    xv, Wv = x.value, W.value
    out = xv @ Wv.T
    out += b.value

    def grad(g):
        gx = g @ Wv if x.requires_grad else None
        gW = g.T @ xv if W.requires_grad else None
        gb = g.sum(axis=0) if b.requires_grad else None
        return gx, gW, gb

    return _result(out, (x, W, b), grad, "affine")


def add(a, b):
    """Elementwise sum; a 1-d operand is broadcast over the rows of a 2-d one."""
    if a.shape == b.shape:
        def grad(g):
            return g, g
    elif a.ndim == 2 and b.ndim == 1 and a.shape[1] == b.shape[0]:
        def grad(g):
            return g, g.sum(axis=0)
    elif a.ndim == 1 and b.ndim == 2 and b.shape[1] == a.shape[0]:
        def grad(g):
            return g.sum(axis=0), g
    else:
        raise DimensionError(f"add shape mismatch: {a.shape} + {b.shape}")
    return _result(a.value + b.value, (a, b), grad, "add")


def add_scalar(a, c):
    return _result(a.value + float(c), (a,), lambda g: (g,), "add_scalar")


def scalar_mul(a, c):
    c = float(c)
    return _result(a.value * c, (a,), lambda g: (g * c,), "scalar_mul")


def hadamard(a, b):
    if a.shape != b.shape:
        raise DimensionError(f"hadamard shape mismatch: {a.shape} * {b.shape}")
    av, bv = a.value, b.value
    return _result(av * bv, (a, b), lambda g: (g * bv, g * av), "hadamard")


def concat(a, b):
    """Join vectors end to end, or matrices column-wise (row counts must agree)."""
    if a.ndim == 1 and b.ndim == 1:
        k = a.shape[0]
        return _result(np.concatenate([a.value, b.value]), (a, b),
                       lambda g: (g[:k], g[k:]), "concat")
    if a.ndim == 2 and b.ndim == 2 and a.shape[0] == b.shape[0]:
        k = a.shape[1]
        return _result(np.concatenate([a.value, b.value], axis=1), (a, b),
                       lambda g: (g[:, :k], g[:, k:]), "concat")
    raise DimensionError(f"concat shape mismatch: {a.shape}, {b.shape}")


def transpose(a):
    if a.ndim != 2:
        raise DimensionError(f"transpose needs a matrix, got shape {a.shape}")
    return _result(a.value.T, (a,), lambda g: (g.T,), "transpose")


def sum_(a, axis=None):
    shape = a.shape
    if axis is None:
        return _result(np.array(a.value.sum()), (a,),
                       lambda g: (np.broadcast_to(g, shape).copy(),), "sum")
    if a.ndim != 2 or axis not in (0, 1):
        raise DimensionError(f"sum over axis {axis} of shape {shape}")

    def grad(g):
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _result(a.value.sum(axis=axis), (a,), grad, "sum")


def sum_squares(a):
    av = a.value
    return _result(np.array(np.vdot(av, av)), (a,), lambda g: (2.0 * g * av,), "sum_squares")


def sparse_matmul(A, b):
    """``A @ b`` for a constant scipy.sparse matrix ``A`` and a dense matrix Tensor ``b``."""
    if b.ndim != 2 or A.shape[1] != b.shape[0]:
        raise DimensionError(f"sparse_matmul shape mismatch: {A.shape} @ {b.shape}")
    return _result(np.asarray(A @ b.value), (b,), lambda g: (np.asarray(A.T @ g),), "sparse_matmul")


def mean(a):
    n = a.value.size
    if n == 0:
        raise DimensionError("mean of an empty tensor")
    return scalar_mul(sum_(a), 1.0 / n)


def dot(a, b):
    if a.ndim != 1 or a.shape != b.shape:
        raise DimensionError(f"dot needs equal-length vectors: {a.shape}, {b.shape}")
    av, bv = a.value, b.value
    return _result(np.array(av @ bv), (a, b), lambda g: (g * bv, g * av), "dot")


def take_rows(a, rows):
    """Gather rows ``a[rows]``; repeated indices accumulate in the backward pass."""
    rows = np.asarray(rows, dtype=np.intp)
    shape = a.shape

    def grad(g):
        scatter = sparse.csr_matrix((np.ones(rows.size), (rows, np.arange(rows.size))),
                                    shape=(shape[0], rows.size))
        return (np.asarray(scatter @ g).reshape(shape),)

    return _result(a.value[rows], (a,), grad, "take_rows")


# ---------------------------------------------------------------- nonlinear


def leaky_relu(a, slope=LEAKY_SLOPE):
    av = a.value
    scale = np.where(av > 0, 1.0, slope)
    return _result(av * scale, (a,), lambda g: (g * scale,), "leaky_relu")


def relu(a):
    return leaky_relu(a, slope=0.0)


def _sigmoid_value(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a):
    s = _sigmoid_value(a.value)
    return _result(s, (a,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def tanh(a):
    t = np.tanh(a.value)
    return _result(t, (a,), lambda g: (g * (1.0 - t * t),), "tanh")


def softmax(a):
    """Row-wise softmax for matrices, plain softmax for vectors."""
    x = a.value
    z = np.exp(x - x.max(axis=-1, keepdims=True))
    p = z / z.sum(axis=-1, keepdims=True)

    def grad(g):
        return (p * (g - (g * p).sum(axis=-1, keepdims=True)),)

    return _result(p, (a,), grad, "softmax")


def log(a, floor=LOG_FLOOR):
    """Natural log with arguments clamped to ``floor``; clamped entries get zero gradient."""
    x = a.value
    if np.any(x < 0):
        raise NumericalError("log of a negative value")
    clamped = x < floor
    safe = np.where(clamped, floor, x)

    def grad(g):
        return (np.where(clamped, 0.0, g / safe),)

    return _result(np.log(safe), (a,), grad, "log")


ACTIVATIONS = {"leaky_relu": leaky_relu, "relu": relu}


# ---------------------------------------------------------------- grad check


@dataclass
class GradCheckReport:
    eps: float
    tol: float
    max_rel_error: dict = field(default_factory=dict)
    n_checked: dict = field(default_factory=dict)

    @property
    def worst(self):
        return float(max(self.max_rel_error.values(), default=0.0))

    @property
    def passed(self):
        return bool(self.worst < self.tol)

    def to_dict(self):
        return {
            "eps": self.eps,
            "tol": self.tol,
            "passed": self.passed,
            "worst": self.worst,
            "max_rel_error": {k: float(v) for k, v in self.max_rel_error.items()},
            "n_checked": {k: int(v) for k, v in self.n_checked.items()},
        }


def grad_check(loss_fn, params, eps=1e-5, tol=1e-4, max_entries=None, seed=0):
    """Compare tape gradients against central differences.

    ``loss_fn()`` must build a scalar Tensor from the current parameter
    values and be deterministic.  ``params`` is a mapping name -> Tensor or
    a sequence of Tensors.  With ``max_entries`` set, tensors larger than
    that are checked on a random subset of that many entries.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if max_entries is not None and max_entries < 100:
        raise ValueError("max_entries must be at least 100")
    if not hasattr(params, "items"):
        params = {p.name or f"param{i}": p for i, p in enumerate(params)}

    def value():
        return float(loss_fn().value)

    for p in params.values():
        p.zero_grad()
    with Tape() as tape:
        loss = loss_fn()
    tape.backward(loss)
    analytic = {name: p.grad.copy() for name, p in params.items()}

    base = value()
    if base != value() or base != float(loss.value):
        raise DeterminismError("loss_fn returned different values for identical parameters")

    rng = np.random.default_rng(seed)
    report = GradCheckReport(eps=eps, tol=tol)
    for name, p in params.items():
        flat = p.value.flat
        size = p.value.size
        idx = np.arange(size)
        if max_entries is not None and size > max_entries:
            idx = np.sort(rng.choice(size, size=max_entries, replace=False))
        worst = 0.0
        for k in idx:
            orig = flat[k]
            flat[k] = orig + eps
            f_plus = value()
            flat[k] = orig - eps
            f_minus = value()
            flat[k] = orig
            numeric = (f_plus - f_minus) / (2 * eps)
            exact = analytic[name].reshape(-1)[k]
            denom = max(abs(exact), abs(numeric), 1e-8)
            worst = max(worst, abs(exact - numeric) / denom)
        report.max_rel_error[name] = worst
        report.n_checked[name] = int(idx.size)
        p.zero_grad()
    return report
