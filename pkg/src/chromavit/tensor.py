"""Dense float32 tensors with reverse-mode automatic differentiation.

Tensors are immutable row-major float32 arrays; every operation is a pure
function returning a fresh tensor.  Running a computation inside
``with GradTape() as tape:`` records one vector-Jacobian callback per
primitive, and ``tape.gradients(loss, params)`` replays the record in
reverse to produce a float32 gradient for every parameter (exact zeros for
parameters that never participated).  With no active tape the same
functions are thin numpy wrappers, so inference pays no bookkeeping cost.
"""

from __future__ import annotations

import math
import threading

import numpy as np
from scipy.special import erf

from .errors import DimensionError, DomainError, NumericError

_INV_SQRT2 = np.float32(1.0 / math.sqrt(2.0))
_INV_SQRT2PI = np.float32(1.0 / math.sqrt(2.0 * math.pi))

_TAPES = threading.local()


def _tape_stack():
    stack = getattr(_TAPES, "stack", None)
    if stack is None:
        stack = []
        _TAPES.stack = stack
    return stack


def _record(out, inputs, vjp):
    stack = _tape_stack()
    if stack:
        stack[-1]._entries.append((out, inputs, vjp))


class Tensor:
    """Immutable dense float32 array."""

    __slots__ = ("data",)

    def __init__(self, data):
        arr = np.array(data, dtype=np.float32)
        arr.flags.writeable = False
        self.data = arr

    @classmethod
    def _wrap(cls, arr):
        # Internal fast path: takes ownership of a freshly computed array.
        out = cls.__new__(cls)
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        if arr.flags.writeable:
            arr.flags.writeable = False
        out.data = arr
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data.item())

    def tolist(self):
        return self.data.tolist()

    def is_finite(self):
        """True when every element is finite (no NaN/Inf)."""
        return bool(np.isfinite(self.data).all())

    def __getitem__(self, key):
        return take(self, key)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, data={self.data!r})"


class GradTape:
    """Ordered record of primitive operations, replayed backward for gradients.

    A tape is confined to the thread that opened it; open it with a ``with``
    block around the forward pass.
    """

    def __init__(self):
        self._entries = []

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _tape_stack().pop()
        assert popped is self, "GradTape exited out of order"
        return False

    def gradients(self, output, params):
        """Gradients of a scalar ``output`` with respect to ``params``.

        ``params`` may be a list of tensors or a dict of name -> tensor; the
        result mirrors its structure with float32 numpy arrays.  Parameters
        that did not participate in the forward pass receive exact zeros.
        """
        if output.size != 1:
            raise DimensionError(
                f"gradient source must be scalar, got shape {output.shape}"
            )
        grads = {id(output): np.ones(output.shape, np.float32)}
        for out, inputs, vjp in reversed(self._entries):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            for inp, gi in zip(inputs, vjp(g)):
                if gi is None:
                    continue
                acc = grads.get(id(inp))
                grads[id(inp)] = gi if acc is None else acc + gi
        if isinstance(params, dict):
            return {name: self._fetch(grads, p) for name, p in params.items()}
        return [self._fetch(grads, p) for p in params]

    @staticmethod
    def _fetch(grads, param):
        g = grads.get(id(param))
        if g is None:
            return np.zeros(param.shape, np.float32)
        return np.asarray(g, np.float32).reshape(param.shape)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g, shape):
    # Sum gradient over axes that numpy broadcasting expanded.
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return np.asarray(g, np.float32)


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        out = Tensor._wrap(a.data + b.data)
    except ValueError as exc:
        raise DimensionError(
            f"cannot add shapes {a.shape} and {b.shape}"
        ) from exc
    _record(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))
    return out


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        out = Tensor._wrap(a.data - b.data)
    except ValueError as exc:
        raise DimensionError(
            f"cannot subtract shapes {a.shape} and {b.shape}"
        ) from exc
    _record(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))
    return out


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        out = Tensor._wrap(a.data * b.data)
    except ValueError as exc:
        raise DimensionError(
            f"cannot multiply shapes {a.shape} and {b.shape}"
        ) from exc
    ad, bd = a.data, b.data
    _record(
        out,
        (a, b),
        lambda g: (_unbroadcast(g * bd, a.shape), _unbroadcast(g * ad, b.shape)),
    )
    return out


def matmul(a, b):
    """Matrix product of two rank-2 tensors; c[i,j] = sum_p a[i,p] * b[p,j]."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shapes {a.shape} x {b.shape} do not chain")
    out = Tensor._wrap(a.data @ b.data)
    ad, bd = a.data, b.data
    _record(out, (a, b), lambda g: (g @ bd.T, ad.T @ g))
    return out


def transpose(a):
    a = _as_tensor(a)
    out = Tensor._wrap(a.data.T)
    _record(out, (a,), lambda g: (np.ascontiguousarray(g.T),))
    return out


def reshape(a, shape):
    a = _as_tensor(a)
    out = Tensor._wrap(a.data.reshape(shape))
    old = a.shape
    _record(out, (a,), lambda g: (g.reshape(old),))
    return out


def concat(parts, axis=0):
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise DimensionError("concat of zero tensors")
    try:
        out = Tensor._wrap(np.concatenate([p.data for p in parts], axis=axis))
    except ValueError as exc:
        raise DimensionError(
            f"cannot concatenate shapes {[p.shape for p in parts]} along axis {axis}"
        ) from exc
    sizes = [p.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.ascontiguousarray(piece) for piece in np.split(g, splits, axis=axis))

    _record(out, tuple(parts), vjp)
    return out


def take(a, key):
    """Basic (int/slice) indexing with a scatter-back gradient."""
    a = _as_tensor(a)
    out = Tensor._wrap(a.data[key])
    src_shape = a.shape

    def vjp(g):
        full = np.zeros(src_shape, np.float32)
        full[key] = g
        return (full,)

    _record(out, (a,), vjp)
    return out


def sum(a, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy naming
    a = _as_tensor(a)
    out = Tensor._wrap(a.data.sum(axis=axis, keepdims=keepdims, dtype=np.float32))
    src_shape = a.shape

    def vjp(g):
        gg = g
        if axis is not None and not keepdims:
            gg = np.expand_dims(g, axis)
        return (np.broadcast_to(gg, src_shape).astype(np.float32, copy=False),)

    _record(out, (a,), vjp)
    return out


def mean(a, axis=None, keepdims=False):
    a = _as_tensor(a)
    out = Tensor._wrap(a.data.mean(axis=axis, keepdims=keepdims, dtype=np.float32))
    src_shape = a.shape
    count = a.size if axis is None else np.prod([src_shape[i] for i in np.atleast_1d(axis)])
    inv = np.float32(1.0 / count)

    def vjp(g):
        gg = g
        if axis is not None and not keepdims:
            gg = np.expand_dims(g, axis)
        return (np.broadcast_to(gg, src_shape).astype(np.float32, copy=False) * inv,)

    _record(out, (a,), vjp)
    return out


def log(a):
    a = _as_tensor(a)
    out = Tensor._wrap(np.log(a.data))
    ad = a.data
    _record(out, (a,), lambda g: (g / ad,))
    return out


def clip_min(a, lo):
    """Elementwise max(a, lo); gradient passes through only where a > lo."""
    a = _as_tensor(a)
    lo = float(lo)
    out = Tensor._wrap(np.maximum(a.data, np.float32(lo)))
    mask = (a.data > lo).astype(np.float32)
    _record(out, (a,), lambda g: (g * mask,))
    return out


def relu(a):
    """Elementwise max(0, x); subgradient 0 at x == 0."""
    a = _as_tensor(a)
    out = Tensor._wrap(np.maximum(a.data, np.float32(0.0)))
    mask = (a.data > 0).astype(np.float32)
    _record(out, (a,), lambda g: (g * mask,))
    return out


def gelu(a):
    """Exact Gaussian error linear unit, x * Phi(x) with Phi the normal CDF."""
    a = _as_tensor(a)
    x = a.data
    cdf = np.float32(0.5) * (np.float32(1.0) + erf(x * _INV_SQRT2))
    out = Tensor._wrap(x * cdf)

    def vjp(g):
        pdf = _INV_SQRT2PI * np.exp(np.float32(-0.5) * x * x)
        return (g * (cdf + x * pdf),)

    _record(out, (a,), vjp)
    return out


def softmax(a, axis=-1):
    """Softmax along ``axis``, computed with max-subtraction for stability."""
    a = _as_tensor(a)
    if not -a.ndim <= axis < a.ndim:
        raise IndexError(f"softmax axis {axis} out of range for shape {a.shape}")
    x = a.data
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor._wrap(y)

    def vjp(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - dot),)

    _record(out, (a,), vjp)
    return out


def layer_norm(x, gamma, beta, eps=1e-5):
    """Normalize the last axis to zero mean / unit variance, then scale-shift.

    Variance uses the population (1/d) normalization.
    """
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    if eps <= 0:
        raise DomainError(f"layer_norm eps must be positive, got {eps}")
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise DimensionError(
            f"layer_norm scale/shift must have shape ({d},), "
            f"got {gamma.shape} and {beta.shape}"
        )
    mu = x.data.mean(axis=-1, keepdims=True, dtype=np.float32)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True, dtype=np.float32)
    inv = 1.0 / np.sqrt(var + np.float32(eps))
    xhat = xc * inv
    out = Tensor._wrap(xhat * gamma.data + beta.data)
    gd = gamma.data

    def vjp(g):
        lead = tuple(range(g.ndim - 1))
        dxhat = g * gd
        dgamma = (g * xhat).sum(axis=lead) if lead else g * xhat
        dbeta = g.sum(axis=lead) if lead else g.copy()
        m1 = dxhat.mean(axis=-1, keepdims=True, dtype=np.float32)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True, dtype=np.float32)
        dx = inv * (dxhat - m1 - xhat * m2)
        return (
            np.asarray(dx, np.float32),
            np.asarray(dgamma, np.float32),
            np.asarray(dbeta, np.float32),
        )

    _record(out, (x, gamma, beta), vjp)
    return out


def grad_check(f, x, h=1e-3, sample=None, seed=0):
    """Compare tape gradients of scalar ``f`` against central differences.

    Returns the maximum over checked coordinates of
    ``|analytic - numeric| / max(1, |analytic|)``.  When ``sample`` is given,
    a seeded random subset of that many coordinates is checked instead of
    every coordinate (useful for large parameter tensors).
    """
    if not 1e-5 <= h <= 1e-2:
        raise DomainError(f"step size h must lie in [1e-5, 1e-2], got {h}")
    with GradTape() as tape:
        y = f(x)
    if not isinstance(y, Tensor) or y.size != 1:
        raise DimensionError("grad_check target must return a scalar Tensor")
    if not y.is_finite():
        raise NumericError("f(x) is not finite")
    analytic = tape.gradients(y, [x])[0].ravel()

    n = x.size
    if sample is None or sample >= n:
        indices = range(n)
    else:
        indices = np.random.default_rng(seed).choice(n, size=sample, replace=False)

    base = x.data.ravel()
    shape = x.shape
    worst = 0.0
    for i in indices:
        up = base.copy()
        up[i] += h
        dn = base.copy()
        dn[i] -= h
        fu = f(Tensor._wrap(up.reshape(shape))).item()
        fd = f(Tensor._wrap(dn.reshape(shape))).item()
        if not (math.isfinite(fu) and math.isfinite(fd)):
            raise NumericError(f"f not finite under perturbation of coordinate {i}")
        numeric = (fu - fd) / (float(up[i]) - float(dn[i]))
        a = float(analytic[i])
        err = abs(a - numeric) / max(1.0, abs(a))
        if err > worst:
            worst = err
    return worst
