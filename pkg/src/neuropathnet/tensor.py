"""Dense float64 tensors with tape-based reverse-mode differentiation.

A graph is built on the fly while ops run and is discarded after
:meth:`Tensor.backward`. Every op returns a new :class:`Tensor` whose
``_backward`` closure pushes the output gradient onto its parents.

>>> x = Tensor([[1.0, 2.0], [3.0, 4.0]], requires_grad=True)
>>> y = (x @ Tensor([[1.0], [1.0]])).sum()
>>> y.backward()
>>> x.grad.tolist()
[[1.0, 1.0], [1.0, 1.0]]
"""

from __future__ import annotations

import contextlib
import math
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .errors import ConfigError, ContractError, DimensionError, NumericError


class Tensor:
    """A node in the differentiation graph.

    Parameters
    ----------
    data : array_like
        Values; converted to a C-contiguous float64 array.
    requires_grad : bool
        Leaf tensors that should receive a gradient.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None,
                 _parents: tuple = (), _backward: Callable | None = None):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents
        self._backward = _backward
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self):
        """Accumulate d(self)/d(node) into ``grad`` of every reachable node.

        Raises
        ------
        ContractError
            If ``self`` is not scalar-shaped.
        NumericError
            If the root value is NaN or infinite.
        """
        if self.data.size != 1:
            raise ContractError(f"backward() needs a scalar root, got shape {self.shape}")
        if not np.isfinite(self.data).all():
            raise NumericError(f"non-finite root value {self.data.reshape(-1)[0]!r}")
        order = _topological(self)
        for node in order:
            node.grad = None
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
        for node in order:
            if node.grad is None:
                node.grad = np.zeros_like(node.data)


def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    return order


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accum(t: Tensor, g: np.ndarray):
    # never in place: the same array may be handed to several parents
    if t.requires_grad:
        t.grad = g if t.grad is None else t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Skip graph construction inside the block (inference only)."""
    global _GRAD_ENABLED
    prev, _GRAD_ENABLED = _GRAD_ENABLED, False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _node(data, parents, backward) -> Tensor:
    if not _GRAD_ENABLED or not any(p.requires_grad for p in parents):
        return Tensor(data)
    return Tensor(data, _parents=parents, _backward=backward)


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)

    def backward(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return _node(a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)

    def backward(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(-g, b.shape))

    return _node(a.data - b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)

    def backward(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g * a.data, b.shape))

    return _node(a.data * b.data, (a, b), backward)


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)

    def backward(g):
        _accum(a, g * c)

    return _node(a.data * c, (a,), backward)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)

    def backward(g):
        _accum(a, g * (1.0 - y * y))

    return _node(y, (a,), backward)


def relu(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        _accum(a, g * (a.data > 0))

    return _node(np.maximum(a.data, 0.0), (a,), backward)


def log(a, floor: float = 0.0) -> Tensor:
    """Natural log; entries below ``floor`` are clamped and get zero gradient."""
    a = as_tensor(a)
    keep = ~(a.data <= floor)  # NaN stays in and propagates
    y = np.log(np.where(keep, a.data, floor) if floor > 0 else a.data)

    def backward(g):
        _accum(a, np.where(keep, g / np.where(keep, a.data, 1.0), 0.0))

    return _node(y, (a,), backward)


def dropout_mask(shape, p: float, key: Sequence[int]) -> np.ndarray:
    """Boolean keep-mask from a counter-based generator keyed by ``key``.

    Each entry is dropped with probability ``round(p * 2**16) / 2**16``.
    """
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in key])))
    return rng.integers(0, 1 << 16, size=shape, dtype=np.uint16) >= np.uint16(round(p * (1 << 16)))


def dropout(a, p: float, key: Sequence[int] = (0,), training: bool = True) -> Tensor:
    """Inverted dropout. Identity when ``training`` is false or ``p == 0``."""
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout probability must lie in [0, 1), got {p}")
    a = as_tensor(a)
    if not training or p == 0.0:
        return a
    keep = dropout_mask(a.shape, p, key)
    s = 1.0 / (1.0 - p)
    y = a.data * keep
    y *= s

    def backward(g):
        gx = g * keep
        gx *= s
        _accum(a, gx)

    return _node(y, (a,), backward)


# ---------------------------------------------------------------------------
# shape ops and reductions
# ---------------------------------------------------------------------------

def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    src = a.shape
    try:
        y = a.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot view {src} as {tuple(shape)}") from None

    def backward(g):
        _accum(a, g.reshape(src))

    return _node(y, (a,), backward)


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))

    def backward(g):
        _accum(a, np.transpose(g, inv))

    return _node(np.transpose(a.data, axes), (a,), backward)


def swapaxes(a, i: int, j: int) -> Tensor:
    a = as_tensor(a)
    axes = list(range(a.ndim))
    axes[i], axes[j] = axes[j], axes[i]
    return transpose(a, axes)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise DimensionError("concat: empty input")
    try:
        y = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        raise DimensionError(f"concat: incompatible shapes {[t.shape for t in ts]} on axis {axis}") from None
    bounds = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def backward(g):
        for t, piece in zip(ts, np.split(g, bounds, axis=axis)):
            _accum(t, piece)

    return _node(y, tuple(ts), backward)


def take(a, index, axis: int = 0) -> Tensor:
    """Gather along ``axis`` with an integer index array."""
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.intp)

    def backward(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            np.add.at(full, (slice(None),) * (axis % a.ndim) + (index,), g)
            _accum(a, full)

    return _node(np.take(a.data, index, axis=axis), (a,), backward)


def pick(a, index) -> Tensor:
    """``out[b] = a[b, index[b]]`` for a 2-D tensor."""
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.intp)
    rows = np.arange(a.shape[0])

    def backward(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[rows, index] = g
            _accum(a, full)

    return _node(a.data[rows, index], (a,), backward)


def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    y = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.shape))

    return _node(y, (a,), backward)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else int(np.prod([a.shape[i] for i in np.atleast_1d(axis)]))
    return scale(sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


# ---------------------------------------------------------------------------
# linear algebra and normalisation
# ---------------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    """(Batched) matrix product with numpy broadcasting over leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} are not aligned")
    try:
        y = np.matmul(a.data, b.data)
    except ValueError:
        raise DimensionError(f"matmul: batch shapes {a.shape} and {b.shape} do not broadcast") from None

    def backward(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape))
        if b.requires_grad:
            if b.ndim == 2:
                k = a.shape[-1]
                gb = a.data.reshape(-1, k).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
            _accum(b, gb)

    return _node(y, (a, b), backward)


def linear(x, w, b=None) -> Tensor:
    """``x @ w (+ b)`` for ``x`` of shape ``(..., k)`` and a 2-D ``w``."""
    x, w = as_tensor(x), as_tensor(w)
    if w.ndim != 2 or x.shape[-1] != w.shape[0]:
        raise DimensionError(f"linear: shapes {x.shape} and {w.shape} are not aligned")
    parents = (x, w)
    y = x.data @ w.data
    if b is not None:
        b = as_tensor(b)
        if b.shape != (w.shape[1],):
            raise DimensionError(f"linear: bias {b.shape} does not match output width {w.shape[1]}")
        y += b.data
        parents = (x, w, b)

    def backward(g):
        g2 = g.reshape(-1, g.shape[-1])
        if x.requires_grad:
            _accum(x, g @ w.data.T)
        if w.requires_grad:
            _accum(w, x.data.reshape(-1, x.shape[-1]).T @ g2)
        if b is not None and b.requires_grad:
            _accum(b, g2.sum(axis=0))

    return _node(y, parents, backward)


def attention(q, k, v, heads: int = 1) -> tuple[Tensor, np.ndarray]:
    """Multi-head scaled dot-product self-attention.

    ``q``, ``k``, ``v`` have shape ``(S, T, d)``; head ``h`` uses columns
    ``h*d/heads:(h+1)*d/heads``. Returns the ``(S, T, d)`` output and the
    ``(S, heads, T, T)`` attention weights (as a plain array).
    """
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    if q.ndim != 3 or q.shape != k.shape or q.shape != v.shape:
        raise DimensionError(f"attention: q {q.shape}, k {k.shape}, v {v.shape} must share one (S, T, d) shape")
    if q.shape[-1] % heads:
        raise DimensionError(f"attention: width {q.shape[-1]} not divisible by {heads} heads")
    sc = 1.0 / math.sqrt(q.shape[-1] // heads)
    out, attn = kernels.attention_forward(q.data, k.data, v.data, heads, sc)

    def backward(g):
        dq, dk, dv = kernels.attention_backward(q.data, k.data, v.data, attn, g, heads, sc)
        _accum(q, dq)
        _accum(k, dk)
        _accum(v, dv)

    return _node(out, (q, k, v), backward), attn


def _rows(x: np.ndarray) -> np.ndarray:
    return x.reshape(-1, x.shape[-1])


def softmax(a, axis: int = -1) -> Tensor:
    """Softmax along ``axis`` with max-subtraction."""
    a = as_tensor(a)
    if not -a.ndim <= axis < a.ndim:
        raise DimensionError(f"softmax: axis {axis} out of range for shape {a.shape}")
    last = axis in (-1, a.ndim - 1)
    x = a.data if last else np.moveaxis(a.data, axis, -1)
    moved_shape = x.shape
    y = kernels.softmax_rows(_rows(x)).reshape(moved_shape)

    def backward(g):
        gm = g if last else np.moveaxis(g, axis, -1)
        gx = kernels.softmax_rows_backward(_rows(y), _rows(gm)).reshape(moved_shape)
        _accum(a, gx if last else np.moveaxis(gx, -1, axis))

    return _node(y if last else np.moveaxis(y, -1, axis), (a,), backward)


def layer_norm(a, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis, then apply ``gain`` and ``bias``."""
    a, gain, bias = as_tensor(a), as_tensor(gain), as_tensor(bias)
    d = a.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError(f"layer_norm: gain {gain.shape} / bias {bias.shape} do not match width {d}")
    if eps <= 0:
        raise ConfigError(f"layer_norm eps must be positive, got {eps}")
    y, xhat, rstd = kernels.layer_norm_rows(_rows(a.data), gain.data, bias.data, eps)

    def backward(g):
        dx, dgain, dbias = kernels.layer_norm_rows_backward(_rows(g), xhat, rstd, gain.data)
        _accum(a, dx.reshape(a.shape))
        _accum(gain, dgain)
        _accum(bias, dbias)

    return _node(y.reshape(a.shape), (a, gain, bias), backward)


# ---------------------------------------------------------------------------
# finite-difference checking
# ---------------------------------------------------------------------------

def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Max over entries of ``|a - n| / max(|a|, |n|, floor)``."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def numeric_grad(fn: Callable[[], Tensor], x: Tensor, h: float = 1e-5) -> np.ndarray:
    """Central differences of the scalar ``fn()`` with respect to ``x.data``."""
    flat = x.data.reshape(-1)
    out = np.empty_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = fn().item()
        flat[i] = orig - h
        fm = fn().item()
        flat[i] = orig
        out[i] = (fp - fm) / (2.0 * h)
    return out.reshape(x.shape)


def check_gradients(fn: Callable[[], Tensor], inputs: Sequence[Tensor], h: float = 1e-5) -> dict[str, float]:
    """Compare analytic and central-difference gradients of ``fn``.

    Returns a mapping from input name (or position) to max relative error.
    """
    for x in inputs:
        x.requires_grad = True
        x.grad = None
    root = fn()
    root.backward()
    analytic = [x.grad.copy() for x in inputs]
    errors = {}
    for pos, (x, ga) in enumerate(zip(inputs, analytic)):
        gn = numeric_grad(fn, x, h)
        errors[x.name or str(pos)] = relative_error(ga, gn)
    return errors


def is_finite(t: Tensor) -> bool:
    return bool(np.isfinite(t.data).all())


def sinusoidal_table(length: int, d: int) -> np.ndarray:
    """Fixed sin/cos positional table of shape ``(length, d)``.

    Even columns hold ``sin(t / 10000^(2k/d))``, odd columns the matching cosine.
    """
    pos = np.arange(length, dtype=np.float64)[:, None]
    k = np.arange(0, d, 2, dtype=np.float64)
    freq = np.exp(-math.log(10000.0) * k / d)
    table = np.zeros((length, d))
    table[:, 0::2] = np.sin(pos * freq)
    table[:, 1::2] = np.cos(pos * freq[: d // 2])
    return table
