"""Tape-free reverse-mode differentiation over a fixed set of array ops.

Every :class:`Tensor` remembers its parents and a closure that pushes its
gradient back to them. :meth:`Tensor.backward` walks the graph in reverse
topological order. Only the ops the networks need are provided: dense layers
over the last axis, GELU, broadcasting add/mul, per-channel matrix products,
mean pooling, masked scatter, slicing, row norms and batch normalisation.
"""

from __future__ import annotations

import math

import numba
import numpy as np

_SQRT_HALF = math.sqrt(0.5)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class Tensor:
    __slots__ = ("data", "grad", "parents", "backward_fn", "requires_grad")

    def __init__(self, data, parents=(), backward_fn=None, requires_grad=False):
        self.data = np.asarray(data, dtype=float)
        self.grad = None
        self.parents = parents
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"

    def _accumulate(self, g):
        # stored gradients are never updated in place, so ``g`` may be shared
        if self.grad is None:
            self.grad = g
        else:
            self.grad = self.grad + g

    def backward(self, seed=None):
        order, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            stack.extend((p, False) for p in node.parents)
        self.grad = np.ones_like(self.data) if seed is None else np.asarray(seed, dtype=float)
        for node in reversed(order):
            if node.backward_fn is not None and node.grad is not None:
                node.backward_fn(node.grad)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, other * -1.0 if isinstance(other, Tensor) else Tensor(-np.asarray(other)))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __matmul__(self, weight):
        return dense(self, weight)


def parameter(value) -> Tensor:
    return Tensor(value, requires_grad=True)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data + b.data, (a, b))

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    out.backward_fn = backward
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise (hadamard) product with numpy broadcasting."""
    out = Tensor(a.data * b.data, (a, b))

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    out.backward_fn = backward
    return out


def scale(a: Tensor, c: float) -> Tensor:
    out = Tensor(a.data * c, (a,))
    out.backward_fn = lambda g: a._accumulate(g * c)
    return out


def dense(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ w (+ b)`` over the last axis of ``x``; one GEMM regardless of batch rank."""
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, x.shape[-1])
    y = x2 @ w.data
    if b is not None:
        y += b.data
    parents = (x, w) if b is None else (x, w, b)
    out = Tensor(y.reshape(lead + (w.shape[1],)), parents)

    def backward(g):
        g2 = g.reshape(-1, w.shape[1])
        if w.requires_grad:
            w._accumulate(x2.T @ g2)
        if b is not None and b.requires_grad:
            b._accumulate(g2.sum(axis=0))
        if x.requires_grad:
            x._accumulate((g2 @ w.data.T).reshape(x.shape))

    out.backward_fn = backward
    return out


@numba.njit(cache=True)
def _gelu_kernel(x, out, deriv):
    # one pass: value x * Phi(x) and derivative Phi(x) + x * phi(x)
    xf, of, df = x.ravel(), out.ravel(), deriv.ravel()
    for i in range(xf.size):
        v = xf[i]
        cdf = 0.5 * (1.0 + math.erf(v * _SQRT_HALF))
        of[i] = v * cdf
        df[i] = cdf + v * _INV_SQRT_2PI * math.exp(-0.5 * v * v)


def gelu(x: Tensor) -> Tensor:
    """Exact GELU, ``x * Phi(x)``."""
    data = np.ascontiguousarray(x.data)
    value = np.empty_like(data)
    deriv = np.empty_like(data)
    _gelu_kernel(data, value, deriv)
    out = Tensor(value, (x,))
    out.backward_fn = lambda g: x._accumulate(g * deriv)
    return out


def reshape(x: Tensor, shape) -> Tensor:
    out = Tensor(x.data.reshape(shape), (x,))
    out.backward_fn = lambda g: x._accumulate(g.reshape(x.shape))
    return out


def swap_nodes(x: Tensor) -> Tensor:
    """Swap axes 1 and 2, i.e. ``h[b, u, v] -> h[b, v, u]``."""
    out = Tensor(np.swapaxes(x.data, 1, 2), (x,))
    out.backward_fn = lambda g: x._accumulate(np.swapaxes(g, 1, 2))
    return out


def channel_matmul(a: Tensor, b: Tensor) -> Tensor:
    """``out[.., i, k, c] = sum_j a[.., i, j, c] * b[.., j, k, c]``."""
    # channels-first contiguous copies keep the stacked GEMMs on the fast path
    at = np.ascontiguousarray(np.moveaxis(a.data, -1, -3))
    bt = np.ascontiguousarray(np.moveaxis(b.data, -1, -3))
    out = Tensor(np.ascontiguousarray(np.moveaxis(at @ bt, -3, -1)), (a, b))

    def backward(g):
        gt = np.ascontiguousarray(np.moveaxis(g, -1, -3))
        if a.requires_grad:
            a._accumulate(np.moveaxis(gt @ np.swapaxes(bt, -1, -2), -3, -1))
        if b.requires_grad:
            b._accumulate(np.moveaxis(np.swapaxes(at, -1, -2) @ gt, -3, -1))

    out.backward_fn = backward
    return out


def concat(tensors, axis=-1) -> Tensor:
    tensors = tuple(tensors)
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis), tensors)
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, sizes, axis=axis)):
            if t.requires_grad:
                t._accumulate(piece)

    out.backward_fn = backward
    return out


def mean(x: Tensor, axis) -> Tensor:
    axis = tuple(np.atleast_1d(axis))
    count = math.prod(x.shape[a] for a in axis)
    out = Tensor(x.data.mean(axis=axis), (x,))

    def backward(g):
        x._accumulate(np.broadcast_to(np.expand_dims(g, axis), x.shape) / count)

    out.backward_fn = backward
    return out


def sum_all(x: Tensor) -> Tensor:
    out = Tensor(x.data.sum(), (x,))
    out.backward_fn = lambda g: x._accumulate(np.broadcast_to(g, x.shape))
    return out


def slice_last(x: Tensor, start: int, stop: int) -> Tensor:
    out = Tensor(x.data[..., start:stop], (x,))

    def backward(g):
        full = np.zeros_like(x.data)
        full[..., start:stop] = g
        x._accumulate(full)

    out.backward_fn = backward
    return out


def scatter_masked(values: Tensor, default: Tensor, mask: np.ndarray) -> Tensor:
    """Place ``values`` rows where ``mask`` is set and ``default`` elsewhere.

    ``values`` is ``(mask.sum(), C)``, ``default`` is ``(1, C)``; the result has
    shape ``mask.shape + (C,)``.
    """
    data = np.empty(mask.shape + (values.shape[-1],))
    data[...] = default.data[0]
    data[mask] = values.data
    out = Tensor(data, (values, default))

    def backward(g):
        if values.requires_grad:
            values._accumulate(g[mask])
        if default.requires_grad:
            default._accumulate(g[~mask].sum(axis=0, keepdims=True))

    out.backward_fn = backward
    return out


def row_norm(x: Tensor) -> Tensor:
    """Euclidean norm over the last axis; the gradient at 0 is taken as 0."""
    n = np.sqrt(np.einsum("...i,...i->...", x.data, x.data))
    out = Tensor(n, (x,))

    def backward(g):
        safe = np.where(n > 0, n, 1.0)
        coef = np.where(n > 0, g / safe, 0.0)
        x._accumulate(x.data * coef[..., None])

    out.backward_fn = backward
    return out


def square(x: Tensor) -> Tensor:
    out = Tensor(x.data * x.data, (x,))
    out.backward_fn = lambda g: x._accumulate(2.0 * g * x.data)
    return out


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5):
    """Training-mode batch normalisation over axis 0.

    Returns the output tensor plus the batch mean and (biased) variance so the
    caller can update running statistics.
    """
    mu = x.data.mean(axis=0)
    var = x.data.var(axis=0)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = Tensor(gamma.data * xhat + beta.data, (x, gamma, beta))
    n = x.shape[0]

    def backward(g):
        if gamma.requires_grad:
            gamma._accumulate((g * xhat).sum(axis=0))
        if beta.requires_grad:
            beta._accumulate(g.sum(axis=0))
        if x.requires_grad:
            gx = g * gamma.data
            x._accumulate(inv / n * (n * gx - gx.sum(axis=0) - xhat * (gx * xhat).sum(axis=0)))

    out.backward_fn = backward
    return out, mu, var


def affine_const(x: Tensor, mul_c, add_c) -> Tensor:
    """``x * mul_c + add_c`` with constant arrays (no gradient to the constants)."""
    out = Tensor(x.data * mul_c + add_c, (x,))
    out.backward_fn = lambda g: x._accumulate(_unbroadcast(g * mul_c, x.shape))
    return out


def take_rows(x: Tensor, index) -> Tensor:
    """``x[index]`` along axis 0; repeated indices accumulate their gradients."""
    index = np.asarray(index, dtype=int)
    out = Tensor(x.data[index], (x,))

    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        x._accumulate(full)

    out.backward_fn = backward
    return out


def split_rows(w: Tensor, k: int) -> tuple[Tensor, Tensor]:
    """``(w[:k], w[k:])`` as two tensors sharing one gradient."""
    top = Tensor(w.data[:k], (w,))
    bottom = Tensor(w.data[k:], (w,))

    def backward_top(g):
        full = np.zeros_like(w.data)
        full[:k] = g
        w._accumulate(full)

    def backward_bottom(g):
        full = np.zeros_like(w.data)
        full[k:] = g
        w._accumulate(full)

    top.backward_fn = backward_top
    bottom.backward_fn = backward_bottom
    return top, bottom
