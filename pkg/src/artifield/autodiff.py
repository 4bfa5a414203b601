"""Minimal reverse-mode automatic differentiation over numpy arrays.

Array-valued tape: each Tensor records its parents and a closure that
scatters the upstream gradient.  Ops are vectorized, so graphs stay small
(hundreds of nodes) even for large batches.  Double precision throughout.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from .errors import InvalidArgumentError

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph construction inside the block (pure inference)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- graph plumbing ----------------------------------------------------

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        if self.data.size != 1:
            raise InvalidArgumentError("backward requires a scalar loss node")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- helpers -----------------------------------------------------------

    def _accum(self, grad: np.ndarray):
        grad = _unbroadcast(np.asarray(grad, dtype=np.float64), self.data.shape)
        if self.grad is None:
            self.grad = grad.copy()
        else:
            self.grad = self.grad + grad

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(as_tensor(other), self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def max(self, axis=None, keepdims=False):
        return tmax(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def transpose(self, *axes):
        return transpose(self, axes or None)

    @property
    def T(self):
        return transpose(self, None)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(p for p in parents if p.requires_grad)
        out._backward = backward
    return out


# -- primitive ops ----------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accum(g)
        if b.requires_grad:
            b._accum(g)

    return _make(out_data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accum(g * b.data)
        if b.requires_grad:
            b._accum(g * a.data)

    return _make(out_data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data / b.data

    def backward(g):
        if a.requires_grad:
            a._accum(g / b.data)
        if b.requires_grad:
            b._accum(-g * a.data / (b.data * b.data))

    return _make(out_data, (a, b), backward)


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    out_data = a.data ** exponent

    def backward(g):
        a._accum(g * exponent * a.data ** (exponent - 1.0))

    return _make(out_data, (a,), backward)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            a._accum(g @ np.swapaxes(b.data, -1, -2))
        if b.requires_grad:
            b._accum(np.swapaxes(a.data, -1, -2) @ g)

    return _make(out_data, (a, b), backward)


def exp(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.exp(a.data)

    def backward(g):
        a._accum(g * out_data)

    return _make(out_data, (a,), backward)


def log(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.log(a.data)

    def backward(g):
        a._accum(g / a.data)

    return _make(out_data, (a,), backward)


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.sqrt(a.data)

    def backward(g):
        a._accum(g * 0.5 / np.where(out_data > 0, out_data, np.inf))

    return _make(out_data, (a,), backward)


def absolute(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.abs(a.data)

    def backward(g):
        a._accum(g * np.sign(a.data))

    return _make(out_data, (a,), backward)


def sin(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        a._accum(g * np.cos(a.data))

    return _make(np.sin(a.data), (a,), backward)


def cos(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        a._accum(-g * np.sin(a.data))

    return _make(np.cos(a.data), (a,), backward)


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0

    def backward(g):
        a._accum(g * mask)

    return _make(np.where(mask, a.data, 0.0), (a,), backward)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    out_data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def backward(g):
        a._accum(g * out_data * (1.0 - out_data))

    return _make(out_data, (a,), backward)


def softplus(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.logaddexp(0.0, a.data)

    def backward(g):
        x = a.data
        s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
        a._accum(g * s)

    return _make(out_data, (a,), backward)


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accum(np.broadcast_to(g, a.data.shape))

    return _make(out_data, (a,), backward)


def tmean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out_data = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size if axis is None else a.data.shape[axis]

    def backward(g):
        g = np.asarray(g) / count
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accum(np.broadcast_to(g, a.data.shape))

    return _make(out_data, (a,), backward)


def tmax(a, axis=None, keepdims=False) -> Tensor:
    """Max reduction; ties send the gradient to the lowest flat index."""
    a = as_tensor(a)
    if axis is None:
        out_data = a.data.max()
        idx = np.argmax(a.data)

        def backward(g):
            buf = np.zeros_like(a.data)
            buf.flat[idx] = float(g)
            a._accum(buf)

        return _make(out_data, (a,), backward)
    out_data = a.data.max(axis=axis, keepdims=keepdims)
    idx = np.argmax(a.data, axis=axis)

    def backward(g):
        g = np.asarray(g)
        if not keepdims:
            g = np.expand_dims(g, axis)
        buf = np.zeros_like(a.data)
        np.put_along_axis(buf, np.expand_dims(idx, axis), g, axis=axis)
        a._accum(buf)

    return _make(out_data, (a,), backward)


def maximum(a, b) -> Tensor:
    """Elementwise max; ties route the gradient to the first argument."""
    a, b = as_tensor(a), as_tensor(b)
    pick_a = a.data >= b.data

    def backward(g):
        if a.requires_grad:
            a._accum(g * pick_a)
        if b.requires_grad:
            b._accum(g * ~pick_a)

    return _make(np.where(pick_a, a.data, b.data), (a, b), backward)


def minimum(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    pick_a = a.data <= b.data

    def backward(g):
        if a.requires_grad:
            a._accum(g * pick_a)
        if b.requires_grad:
            b._accum(g * ~pick_a)

    return _make(np.where(pick_a, a.data, b.data), (a, b), backward)


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp to constant bounds; gradient is zero outside the interval."""
    a = as_tensor(a)
    inside = (a.data >= lo) & (a.data <= hi)

    def backward(g):
        a._accum(g * inside)

    return _make(np.clip(a.data, lo, hi), (a,), backward)


def concat(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t._accum(g[tuple(sl)])

    return _make(out_data, tuple(tensors), backward)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        a._accum(g.reshape(a.data.shape))

    return _make(a.data.reshape(shape), (a,), backward)


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    out_data = np.transpose(a.data, axes)
    inv = None if axes is None else np.argsort(axes)

    def backward(g):
        a._accum(np.transpose(g, inv))

    return _make(out_data, (a,), backward)


def take(a, index) -> Tensor:
    """Row gather / basic indexing; backward scatter-adds in a fixed order."""
    a = as_tensor(a)
    out_data = a.data[index]

    def backward(g):
        buf = np.zeros_like(a.data)
        np.add.at(buf, index, g)
        a._accum(buf)

    return _make(out_data, (a,), backward)


def broadcast_rows(a, n: int) -> Tensor:
    """Repeat a (1, F) row tensor to (n, F); backward sums over rows."""
    a = as_tensor(a)
    if a.data.ndim != 2 or a.data.shape[0] != 1:
        raise InvalidArgumentError("broadcast_rows expects a (1, F) tensor")
    out_data = np.broadcast_to(a.data, (n, a.data.shape[1])).copy()

    def backward(g):
        a._accum(g.sum(axis=0, keepdims=True))

    return _make(out_data, (a,), backward)


def scatter_rows(a, index: np.ndarray, n: int, fill: float = 0.0) -> Tensor:
    """Place rows of ``a`` at ``index`` within ``n`` rows of a fill constant."""
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.int64)
    out_data = np.full((n,) + a.data.shape[1:], fill)
    out_data[index] = a.data

    def backward(g):
        a._accum(g[index])

    return _make(out_data, (a,), backward)


def segment_sum(a, index: np.ndarray, num_segments: int) -> Tensor:
    """Sum rows of ``a`` into ``num_segments`` buckets along axis 0."""
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.int64)
    out_data = np.zeros((num_segments,) + a.data.shape[1:])
    np.add.at(out_data, index, a.data)

    def backward(g):
        a._accum(g[index])

    return _make(out_data, (a,), backward)


def cummax(a, axis: int) -> Tensor:
    """Running maximum along ``axis``; ties keep the earliest index."""
    a = as_tensor(a)
    out_data = np.maximum.accumulate(a.data, axis=axis)
    # Earliest index achieving each running max.
    n = a.data.shape[axis]
    arg = np.zeros(a.data.shape, dtype=np.int64)
    sl = [slice(None)] * a.data.ndim

    def at(i):
        s = list(sl)
        s[axis] = i
        return tuple(s)

    for i in range(1, n):
        newer = a.data[at(i)] > out_data[at(i - 1)]
        arg[at(i)] = np.where(newer, i, arg[at(i - 1)])

    def backward(g):
        buf = np.zeros_like(a.data)
        idx = np.indices(a.data.shape)
        idx[axis] = arg
        np.add.at(buf, tuple(idx), g)
        a._accum(buf)

    return _make(out_data, (a,), backward)


def bmv(mats: np.ndarray, x) -> Tensor:
    """Batched matrix-vector product with constant matrices.

    mats: (N, m, k) numpy array; x: (N, k) tensor -> (N, m).
    """
    x = as_tensor(x)
    mats = np.asarray(mats, dtype=np.float64)
    out_data = np.einsum("nij,nj->ni", mats, x.data)

    def backward(g):
        x._accum(np.einsum("nij,ni->nj", mats, g))

    return _make(out_data, (x,), backward)


def stack(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    expanded = [reshape(t, t.data.shape[:axis] + (1,) + t.data.shape[axis:]) for t in tensors]
    return concat(expanded, axis=axis)


def where_const(cond: np.ndarray, a, b) -> Tensor:
    """Select by a constant boolean mask (no gradient through the mask)."""
    a, b = as_tensor(a), as_tensor(b)
    cond = np.asarray(cond, dtype=bool)

    def backward(g):
        if a.requires_grad:
            a._accum(g * cond)
        if b.requires_grad:
            b._accum(g * ~cond)

    return _make(np.where(cond, a.data, b.data), (a, b), backward)
