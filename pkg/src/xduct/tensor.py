"""Dense float64 tensors with reverse-mode automatic differentiation.

Every operation on :class:`Tensor` objects that require gradients records a
node holding its parents and a closure mapping the output gradient to input
gradients.  Nodes carry a monotonically increasing id, so the recording
order is a topological order of the graph and :func:`backward` simply
visits the reachable nodes by decreasing id.

Only the ranks and broadcasting needed by the transducer models are
supported; all arithmetic is float64.

``-inf`` is admitted as a masking sentinel (see :func:`masked_fill`); the
checked mode rejects NaN and ``+inf`` at every op boundary.
"""

from __future__ import annotations

import contextlib
import itertools
import threading
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ArgumentError, DomainError, NonFiniteError, ShapeError

__all__ = [
    "Tensor",
    "no_grad",
    "grad_enabled",
    "checked",
    "set_checked",
    "is_checked",
    "backward",
    "matmul",
    "apply_unary",
    "tanh",
    "sigmoid",
    "exp",
    "log",
    "concat",
    "stack",
    "softmax",
    "softmax_rows",
    "log_softmax",
    "logsumexp",
    "pick",
    "masked_fill",
    "dropout",
    "clip_global_norm",
    "zero_grad",
]

_ids = itertools.count()
_local = threading.local()


def grad_enabled() -> bool:
    return getattr(_local, "grad", True)


def is_checked() -> bool:
    return getattr(_local, "checked", False)


def set_checked(enabled: bool) -> None:
    """Turn NaN/+inf detection on or off for the calling thread."""
    _local.checked = bool(enabled)


@contextlib.contextmanager
def checked(enabled: bool = True):
    prev = is_checked()
    set_checked(enabled)
    try:
        yield
    finally:
        set_checked(prev)


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording a graph."""
    prev = grad_enabled()
    _local.grad = False
    try:
        yield
    finally:
        _local.grad = prev


def _check(data: np.ndarray, op: str) -> None:
    if np.isnan(data).any() or np.isposinf(data).any():
        bad = tuple(int(i) for i in np.argwhere(np.isnan(data) | np.isposinf(data))[0])
        raise NonFiniteError(f"{op}: non-finite value at index {bad}")


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


class Tensor:
    """A float64 array participating in a reverse-mode differentiation graph.

    Tensors are treated as immutable; only ``grad`` buffers change (and
    parameter data, which the optimizer rewrites between graphs).
    """

    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_backward", "_id")
    __array_priority__ = 100.0

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        if is_checked():
            _check(self.data, f"leaf {name or ''}".strip())
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name
        self._parents: tuple = ()
        self._backward: Callable | None = None
        self._id = next(_ids)

    @classmethod
    def _make(cls, data: np.ndarray, parents: tuple, backward: Callable, op: str) -> "Tensor":
        t = cls.__new__(cls)
        t.data = data
        t.grad = None
        t.name = None
        t._id = next(_ids)
        if is_checked():
            _check(data, op)
        if grad_enabled() and any(p.requires_grad for p in parents):
            t.requires_grad = True
            t._parents = parents
            t._backward = backward
        else:
            t.requires_grad = False
            t._parents = ()
            t._backward = None
        return t

    # -- introspection -------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # -- operators -----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tsum(self, axis, keepdims)

    def mean(self, axis=None) -> "Tensor":
        return tmean(self, axis)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def swapaxes(self, a: int, b: int) -> "Tensor":
        return swapaxes(self, a, b)

    @property
    def T(self) -> "Tensor":
        return swapaxes(self, -1, -2)


def _t(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# -- elementwise arithmetic ----------------------------------------------

def add(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    sa, sb = a.shape, b.shape
    return Tensor._make(
        a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add"
    )


def sub(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    sa, sb = a.shape, b.shape
    return Tensor._make(
        a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub"
    )


def mul(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    ad, bd = a.data, b.data

    def bw(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return Tensor._make(ad * bd, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    ad, bd = a.data, b.data

    def bw(g):
        return _unbroadcast(g / bd, ad.shape), _unbroadcast(-g * ad / (bd * bd), bd.shape)

    return Tensor._make(ad / bd, (a, b), bw, "div")


def matmul(a, b) -> Tensor:
    """Matrix product with numpy ``matmul`` semantics (1-D and batched operands)."""
    a, b = _t(a), _t(b)
    ad, bd = a.data, b.data
    if ad.ndim == 0 or bd.ndim == 0 or ad.shape[-1] != bd.shape[-2 if bd.ndim > 1 else 0]:
        raise ShapeError(f"matmul: incompatible shapes {ad.shape} and {bd.shape}")
    try:
        out = np.matmul(ad, bd)
    except ValueError as exc:
        raise ShapeError(f"matmul: incompatible shapes {ad.shape} and {bd.shape}") from exc

    def bw(g):
        a2 = ad[None, :] if ad.ndim == 1 else ad
        b2 = bd[:, None] if bd.ndim == 1 else bd
        g2 = g
        if ad.ndim == 1:
            g2 = np.expand_dims(g2, -2)
        if bd.ndim == 1:
            g2 = np.expand_dims(g2, -1)
        ga = np.matmul(g2, np.swapaxes(b2, -1, -2))
        gb = np.matmul(np.swapaxes(a2, -1, -2), g2)
        if ad.ndim == 1:
            ga = _unbroadcast(ga, (1,) * (ga.ndim - 2) + (1, ad.shape[0])).reshape(ad.shape)
        else:
            ga = _unbroadcast(ga, ad.shape)
        if bd.ndim == 1:
            gb = _unbroadcast(gb, (1,) * (gb.ndim - 2) + (bd.shape[0], 1)).reshape(bd.shape)
        else:
            gb = _unbroadcast(gb, bd.shape)
        return ga, gb

    return Tensor._make(out, (a, b), bw, "matmul")


# -- unary functions -----------------------------------------------------

def tanh(x) -> Tensor:
    x = _t(x)
    y = np.tanh(x.data)
    return Tensor._make(y, (x,), lambda g: (g * (1.0 - y * y),), "tanh")


def _sigmoid(v: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -v))


def sigmoid(x) -> Tensor:
    x = _t(x)
    y = _sigmoid(x.data)
    return Tensor._make(y, (x,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def exp(x) -> Tensor:
    x = _t(x)
    with np.errstate(over="ignore"):  # overflow surfaces as +inf, caught in checked mode
        y = np.exp(x.data)
    return Tensor._make(y, (x,), lambda g: (g * y,), "exp")


def log(x) -> Tensor:
    x = _t(x)
    xd = x.data
    bad = xd <= 0
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise DomainError(f"log: non-positive entry {xd[idx]!r} at index {idx}")
    return Tensor._make(np.log(xd), (x,), lambda g: (g / xd,), "log")


_UNARY = {"tanh": tanh, "sigmoid": sigmoid, "exp": exp, "log": log}


def apply_unary(x, f: str) -> Tensor:
    """Apply one of ``tanh``, ``sigmoid``, ``exp``, ``log`` elementwise."""
    try:
        fn = _UNARY[f]
    except KeyError:
        raise ArgumentError(f"unknown unary function {f!r}; expected one of {sorted(_UNARY)}") from None
    return fn(x)


# -- shape manipulation --------------------------------------------------

def _is_basic_index(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (slice, int, np.integer)) or i is None or i is Ellipsis for i in items)


def getitem(x: Tensor, idx) -> Tensor:
    xd = x.data
    out = xd[idx]
    basic = _is_basic_index(idx)
    if basic:
        out = out.copy()

    def bw(g):
        z = np.zeros_like(xd)
        if basic:
            z[idx] = g
        else:
            np.add.at(z, idx, g)
        return (z,)

    return Tensor._make(np.asarray(out, dtype=np.float64), (x,), bw, "getitem")


def reshape(x: Tensor, shape) -> Tensor:
    x = _t(x)
    orig = x.shape
    return Tensor._make(x.data.reshape(shape), (x,), lambda g: (g.reshape(orig),), "reshape")


def swapaxes(x: Tensor, a: int, b: int) -> Tensor:
    x = _t(x)
    return Tensor._make(
        np.swapaxes(x.data, a, b), (x,), lambda g: (np.swapaxes(g, a, b),), "swapaxes"
    )


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    """Join tensors along ``axis``; all other dimensions must agree."""
    ts = [_t(t) for t in tensors]
    if not ts:
        raise ArgumentError("concat: no tensors given")
    ref = ts[0].shape
    ax = axis % len(ref) if ref else 0
    for t in ts[1:]:
        if t.ndim != len(ref) or any(
            d1 != d2 for k, (d1, d2) in enumerate(zip(ref, t.shape)) if k != ax
        ):
            raise ShapeError(f"concat: shapes {ref} and {t.shape} differ off axis {axis}")
    sizes = [t.shape[ax] for t in ts]
    cuts = np.cumsum(sizes)[:-1]
    out = np.concatenate([t.data for t in ts], axis=ax)
    return Tensor._make(out, tuple(ts), lambda g: tuple(np.split(g, cuts, axis=ax)), "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    ts = [_t(t) for t in tensors]
    if not ts:
        raise ArgumentError("stack: no tensors given")
    try:
        out = np.stack([t.data for t in ts], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"stack: {exc}") from exc
    ax = axis % out.ndim
    n = len(ts)
    return Tensor._make(
        out, tuple(ts), lambda g: tuple(np.take(g, k, axis=ax) for k in range(n)), "stack"
    )


# -- reductions ----------------------------------------------------------

def _expand(g: np.ndarray, shape: tuple, axis, keepdims: bool) -> np.ndarray:
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape)


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    x = _t(x)
    shape = x.shape
    out = np.asarray(x.data.sum(axis=axis, keepdims=keepdims), dtype=np.float64)
    return Tensor._make(out, (x,), lambda g: (_expand(g, shape, axis, keepdims),), "sum")


def tmean(x: Tensor, axis=None) -> Tensor:
    x = _t(x)
    n = x.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(tsum(x, axis), 1.0 / float(n))


def softmax(x, axis: int = -1) -> Tensor:
    x = _t(x)
    m = np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(x.data - m)
    y = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return Tensor._make(y, (x,), bw, "softmax")


def softmax_rows(x) -> Tensor:
    """Row-wise softmax of a matrix, max-shifted for stability."""
    x = _t(x)
    if x.ndim != 2:
        raise ShapeError(f"softmax_rows: expected a matrix, got shape {x.shape}")
    return softmax(x, axis=-1)


def log_softmax(x, axis: int = -1) -> Tensor:
    x = _t(x)
    m = np.max(x.data, axis=axis, keepdims=True)
    shifted = x.data - m
    y = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

    def bw(g):
        return (g - np.exp(y) * g.sum(axis=axis, keepdims=True),)

    return Tensor._make(y, (x,), bw, "log_softmax")


def logsumexp(x, axis=None, keepdims: bool = False) -> Tensor:
    """``log(sum(exp(x)))`` along ``axis`` (all entries when None), max-shifted."""
    x = _t(x)
    if x.size == 0:
        raise ArgumentError("logsumexp: empty input")
    xd = x.data
    m = np.max(xd, axis=axis, keepdims=True)
    m_safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        lse = np.log(np.exp(xd - m_safe).sum(axis=axis, keepdims=True)) + m_safe
    out = lse if keepdims else (np.squeeze(lse, axis=axis) if axis is not None else lse.reshape(()))
    out = np.asarray(out, dtype=np.float64)

    def bw(g):
        gk = g if keepdims or axis is None else np.expand_dims(g, axis)
        if axis is None and not keepdims:
            gk = np.reshape(g, (1,) * xd.ndim)
        finite = np.isfinite(lse)
        w = np.exp(xd - np.where(finite, lse, 0.0))
        w = np.where(finite, w, 0.0)
        return (gk * w,)

    return Tensor._make(out, (x,), bw, "logsumexp")


# -- indexing helpers ----------------------------------------------------

def pick(x, index) -> Tensor:
    """Select ``x[..., index[...]]`` along the last axis."""
    x = _t(x)
    idx = np.asarray(index, dtype=np.intp)[..., None]
    xd = x.data
    try:
        out = np.take_along_axis(xd, np.broadcast_to(idx, xd.shape[:-1] + (1,)), axis=-1)[..., 0]
    except (ValueError, IndexError) as exc:
        raise ShapeError(f"pick: index shape {idx.shape[:-1]} vs tensor {xd.shape}") from exc
    full = np.broadcast_to(idx, xd.shape[:-1] + (1,))

    def bw(g):
        z = np.zeros_like(xd)
        np.put_along_axis(z, full, g[..., None], axis=-1)
        return (z,)

    return Tensor._make(np.ascontiguousarray(out), (x,), bw, "pick")


def masked_fill(x, mask, value: float) -> Tensor:
    """Replace entries where ``mask`` is True by ``value``; no gradient flows there."""
    x = _t(x)
    mask = np.asarray(mask, dtype=bool)
    try:
        full = np.broadcast_to(mask, x.shape)
    except ValueError as exc:
        raise ShapeError(f"masked_fill: mask {mask.shape} vs tensor {x.shape}") from exc
    out = np.where(full, value, x.data)
    return Tensor._make(out, (x,), lambda g: (np.where(full, 0.0, g),), "masked_fill")


def dropout(x, rate: float, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout; identity when ``rate`` is 0 or no generator is given."""
    x = _t(x)
    if rate <= 0.0 or rng is None:
        return x
    if rate >= 1.0:
        raise ArgumentError(f"dropout rate must be < 1, got {rate}")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return mul(x, Tensor(keep))


# -- gradients -----------------------------------------------------------

def backward(root: Tensor) -> None:
    """Accumulate d(root)/d(leaf) into ``leaf.grad`` for every reachable leaf."""
    if root.size != 1:
        raise ArgumentError(f"backward: root must be scalar, got shape {root.shape}")
    if not root.requires_grad:
        return
    seen: dict[int, Tensor] = {}
    todo = [root]
    while todo:
        t = todo.pop()
        if t._id in seen:
            continue
        seen[t._id] = t
        for p in t._parents:
            if p.requires_grad and p._id not in seen:
                todo.append(p)
    grads: dict[int, np.ndarray] = {root._id: np.ones_like(root.data)}
    for tid in sorted(seen, reverse=True):
        t = seen[tid]
        g = grads.pop(tid, None)
        if g is None:
            continue
        if t._backward is None:
            t.grad = np.array(g, dtype=np.float64) if t.grad is None else t.grad + g
            continue
        for p, pg in zip(t._parents, t._backward(g)):
            if pg is None or not p.requires_grad:
                continue
            prev = grads.get(p._id)
            grads[p._id] = pg if prev is None else prev + pg


def zero_grad(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None


def clip_global_norm(params: Iterable[Tensor], max_norm: float) -> float:
    """Rescale the ``grad`` buffers so their joint L2 norm is at most ``max_norm``.

    Returns the scale factor that was applied (1.0 when no clipping happened).
    """
    if max_norm <= 0:
        raise ArgumentError(f"max_norm must be positive, got {max_norm}")
    params = [p for p in params if p.grad is not None]
    total = 0.0
    for p in params:
        total += float(np.sum(p.grad * p.grad))
    norm = float(np.sqrt(total))
    if norm <= max_norm:
        return 1.0
    scale = max_norm / norm
    for p in params:
        p.grad = p.grad * scale
    return scale
