"""A small reverse-mode autodiff tensor over numpy arrays.

Each operation records its parents and a closure that pushes the output
gradient back to them; :meth:`Tensor.backward` walks the graph in reverse
topological order.  Only the operations the surrogate needs are provided.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np

from . import functional as F
from ..stencil import SECOND_DERIVATIVE_KERNEL, correlate3x3, correlate3x3_adjoint


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None,
                 _parents: tuple = (), _backward: Callable | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = _parents
        self._backward = _backward

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        # Out of place: ``g`` may be shared with other nodes, so it is never mutated.
        g = np.asarray(g, dtype=np.float64)
        self.grad = g if self.grad is None else self.grad + g

    def backward(self, grad: np.ndarray | None = None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a gradient needs a scalar tensor")
            grad = np.ones_like(self.data)
        order, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(grad)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                if node._parents:
                    # Interior nodes do not keep their gradients.
                    node.grad = None if node is not self else node.grad

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __neg__(self):
        return mul(self, -1.0)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, parents: Sequence[Tensor], backward) -> Tensor:
    req = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=req, _parents=tuple(parents) if req else (),
                  _backward=backward if req else None)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _result(a.data + b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _result(a.data * b.data, (a, b), backward)


def sum_all(x: Tensor) -> Tensor:
    def backward(g):
        x._accumulate(np.broadcast_to(g, x.shape))

    return _result(x.data.sum(), (x,), backward)


def mean_all(x: Tensor) -> Tensor:
    n = x.data.size

    def backward(g):
        x._accumulate(np.broadcast_to(g / n, x.shape))

    return _result(x.data.mean(), (x,), backward)


def square(x: Tensor) -> Tensor:
    def backward(g):
        x._accumulate(2.0 * x.data * g)

    return _result(x.data ** 2, (x,), backward)


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)

    def backward(g):
        x._accumulate(g * (1.0 - y ** 2))

    return _result(y, (x,), backward)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Dense layer ``x @ weight.T + bias`` for ``x`` of shape ``(batch, in)``."""
    parents = (x, weight) if bias is None else (x, weight, bias)
    y = x.data @ weight.data.T
    if bias is not None:
        y = y + bias.data

    def backward(g):
        if x.requires_grad:
            x._accumulate(g @ weight.data)
        if weight.requires_grad:
            weight._accumulate(g.T @ x.data)
        if bias is not None and bias.requires_grad:
            bias._accumulate(g.sum(axis=0))

    return _result(y, parents, backward)


# When not None, every piecewise-linear activation appends its sign pattern here.
_activation_log: list | None = None


@contextmanager
def record_activation_patterns():
    """Collect the on/off pattern of each (leaky) ReLU evaluated inside the block."""
    global _activation_log
    saved, _activation_log = _activation_log, []
    try:
        yield _activation_log
    finally:
        _activation_log = saved


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    positive = x.data > 0
    if _activation_log is not None:
        _activation_log.append(positive)
    scale = np.where(positive, 1.0, slope)

    def backward(g):
        x._accumulate(g * scale)

    return _result(x.data * scale, (x,), backward)


def relu(x: Tensor) -> Tensor:
    return leaky_relu(x, 0.0)


def dropout(x: Tensor, p: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs a random generator")
    keep = (rng.random(x.shape) >= p) / (1.0 - p)

    def backward(g):
        x._accumulate(g * keep)

    return _result(x.data * keep, (x,), backward)


def concat(xs: Sequence[Tensor], axis: int = 1) -> Tensor:
    sizes = [t.shape[axis] for t in xs]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(xs, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                index = [slice(None)] * g.ndim
                index[axis] = slice(lo, hi)
                t._accumulate(g[tuple(index)])

    return _result(np.concatenate([t.data for t in xs], axis=axis), xs, backward)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    y = F.conv2d_forward(x.data, weight.data, None if bias is None else bias.data, stride, padding)
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        gx, gw, gb = F.conv2d_backward(g, x.data, weight.data, stride, padding)
        if x.requires_grad:
            x._accumulate(gx)
        if weight.requires_grad:
            weight._accumulate(gw)
        if bias is not None and bias.requires_grad:
            bias._accumulate(gb)

    return _result(y, parents, backward)


def conv_transpose2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
                     stride: int = 2, padding: int = 1) -> Tensor:
    y = F.conv_transpose2d_forward(x.data, weight.data, None if bias is None else bias.data, stride, padding)
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        gx, gw, gb = F.conv_transpose2d_backward(g, x.data, weight.data, stride, padding)
        if x.requires_grad:
            x._accumulate(gx)
        if weight.requires_grad:
            weight._accumulate(gw)
        if bias is not None and bias.requires_grad:
            bias._accumulate(gb)

    return _result(y, parents, backward)


def batch_norm(x: Tensor, scale: Tensor, shift: Tensor, running_mean: np.ndarray, running_var: np.ndarray,
               training: bool, momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Per-channel batch normalization.

    In training mode batch statistics are used and the running buffers are
    updated in place (unbiased variance, as is customary); otherwise the
    running statistics define a fixed affine map.
    """
    if training:
        y, cache, mean, var = F.batch_norm_forward(x.data, scale.data, shift.data, eps)
        n = x.shape[0] * x.shape[2] * x.shape[3]
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * var * (n / max(n - 1, 1))

        def backward(g):
            gx, gs, gb = F.batch_norm_backward(g, cache, scale.data)
            if x.requires_grad:
                x._accumulate(gx)
            if scale.requires_grad:
                scale._accumulate(gs)
            if shift.requires_grad:
                shift._accumulate(gb)

        return _result(y, (x, scale, shift), backward)

    inv_std = 1.0 / np.sqrt(running_var + eps)
    xhat = (x.data - running_mean[None, :, None, None]) * inv_std[None, :, None, None]
    y = scale.data[None, :, None, None] * xhat + shift.data[None, :, None, None]

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * (scale.data * inv_std)[None, :, None, None])
        if scale.requires_grad:
            scale._accumulate(np.sum(g * xhat, axis=(0, 2, 3)))
        if shift.requires_grad:
            shift._accumulate(g.sum(axis=(0, 2, 3)))

    return _result(y, (x, scale, shift), backward)


def overwrite(x: Tensor, fixed: np.ndarray, value: np.ndarray) -> Tensor:
    """Replace entries where ``fixed`` is True by ``value``; no gradient flows there."""
    free = ~np.broadcast_to(fixed, x.shape)

    def backward(g):
        x._accumulate(np.where(free, g, 0.0))

    return _result(np.where(free, x.data, value), (x,), backward)


def laplacian(x: Tensor) -> Tensor:
    """5-point Laplacian of the interior: ``(..., H, W)`` to ``(..., H-2, W-2)``."""
    k = SECOND_DERIVATIVE_KERNEL
    y = correlate3x3(x.data, k) + correlate3x3(x.data, k.T)

    def backward(g):
        x._accumulate(correlate3x3_adjoint(g, k) + correlate3x3_adjoint(g, k.T))

    return _result(y, (x,), backward)


def masked_mean_square(r: Tensor, valid: np.ndarray) -> Tensor:
    """Per-sample mean of ``r**2`` over ``valid`` cells, then averaged over the batch."""
    valid = np.broadcast_to(valid, r.shape)
    counts = valid.reshape(r.shape[0], -1).sum(axis=1).astype(np.float64)
    if np.any(counts == 0):
        raise ValueError("every sample needs at least one valid residual cell")
    shape = (r.shape[0],) + (1,) * (r.ndim - 1)
    weight = np.where(valid, 1.0, 0.0) / (counts.reshape(shape) * r.shape[0])
    value = np.sum(weight * r.data ** 2)

    def backward(g):
        r._accumulate(2.0 * g * weight * r.data)

    return _result(value, (r,), backward)
