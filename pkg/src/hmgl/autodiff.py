"""Minimal reverse-mode automatic differentiation over dense numpy arrays.

Covers exactly the operation set needed by the graph model: matmul,
broadcast arithmetic, exp/log/sqrt, ReLU, slicing, concatenation and
reductions. Gradients are float64 throughout so they can be checked
against central finite differences at tight tolerances.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """A numpy array with a backward closure for reverse-mode gradients."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_grad_fn")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._grad_fn: Callable | None = None

    @classmethod
    def _from_op(cls, data, parents: Sequence["Tensor"], grad_fn: Callable) -> "Tensor":
        out = cls(data, requires_grad=any(p.requires_grad for p in parents))
        if out.requires_grad:
            out._parents = tuple(parents)
            out._grad_fn = grad_fn
        return out

    # ---- basic introspection -------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # ---- arithmetic ------------------------------------------------------

    def __add__(self, other) -> "Tensor":
        other = as_tensor(other)
        out_data = self.data + other.data

        def grad_fn(g):
            return _unbroadcast(g, self.data.shape), _unbroadcast(g, other.data.shape)

        return Tensor._from_op(out_data, (self, other), grad_fn)

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        return Tensor._from_op(-self.data, (self,), lambda g: (-g,))

    def __sub__(self, other) -> "Tensor":
        return self + (-as_tensor(other))

    def __rsub__(self, other) -> "Tensor":
        return as_tensor(other) + (-self)

    def __mul__(self, other) -> "Tensor":
        other = as_tensor(other)
        out_data = self.data * other.data
        a, b = self, other

        def grad_fn(g):
            return (
                _unbroadcast(g * b.data, a.data.shape),
                _unbroadcast(g * a.data, b.data.shape),
            )

        return Tensor._from_op(out_data, (a, b), grad_fn)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        other = as_tensor(other)
        out_data = self.data / other.data
        a, b = self, other

        def grad_fn(g):
            return (
                _unbroadcast(g / b.data, a.data.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape),
            )

        return Tensor._from_op(out_data, (a, b), grad_fn)

    def __matmul__(self, other) -> "Tensor":
        other = as_tensor(other)
        out_data = self.data @ other.data
        a, b = self, other

        def grad_fn(g):
            return g @ b.data.T, a.data.T @ g

        return Tensor._from_op(out_data, (a, b), grad_fn)

    @property
    def T(self) -> "Tensor":
        return Tensor._from_op(self.data.T, (self,), lambda g: (g.T,))

    # ---- elementwise nonlinearities -------------------------------------

    def exp(self) -> "Tensor":
        out_data = np.exp(self.data)
        return Tensor._from_op(out_data, (self,), lambda g: (g * out_data,))

    def log(self) -> "Tensor":
        return Tensor._from_op(np.log(self.data), (self,), lambda g: (g / self.data,))

    def sqrt(self) -> "Tensor":
        out_data = np.sqrt(self.data)

        def grad_fn(g):
            # Subgradient 0 at the origin keeps hinge-style losses finite.
            safe = np.where(out_data > 0.0, out_data, 1.0)
            return (np.where(out_data > 0.0, 0.5 * g / safe, 0.0),)

        return Tensor._from_op(out_data, (self,), grad_fn)

    def relu(self) -> "Tensor":
        mask = self.data > 0.0
        return Tensor._from_op(self.data * mask, (self,), lambda g: (g * mask,))

    def clip_min(self, floor: float) -> "Tensor":
        mask = self.data > floor
        out_data = np.maximum(self.data, floor)
        return Tensor._from_op(out_data, (self,), lambda g: (g * mask,))

    # ---- reductions / shape ops ------------------------------------------

    def sum(self, axis: int | None = None, keepdims: bool = False) -> "Tensor":
        out_data = self.data.sum(axis=axis, keepdims=keepdims)
        shape = self.data.shape

        def grad_fn(g):
            if axis is None:
                return (np.broadcast_to(g, shape).copy(),)
            gg = g if keepdims else np.expand_dims(g, axis)
            return (np.broadcast_to(gg, shape).copy(),)

        return Tensor._from_op(out_data, (self,), grad_fn)

    def mean(self) -> "Tensor":
        n = self.data.size
        return self.sum() * (1.0 / n)

    def __getitem__(self, key) -> "Tensor":
        out_data = self.data[key]

        def grad_fn(g):
            full = np.zeros_like(self.data)
            np.add.at(full, key, g)
            return (full,)

        return Tensor._from_op(out_data, (self,), grad_fn)

    # ---- backward ---------------------------------------------------------

    def backward(self) -> None:
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar output")

        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._grad_fn is None:
                continue
            grads = node._grad_fn(node.grad)
            for parent, g in zip(node._parents, grads):
                if g is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = np.zeros_like(parent.data)
                parent.grad += g


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def concat_cols(tensors: Sequence[Tensor]) -> Tensor:
    """Concatenate 2-D tensors along columns."""
    out_data = np.concatenate([t.data for t in tensors], axis=1)
    widths = [t.data.shape[1] for t in tensors]

    def grad_fn(g):
        grads = []
        start = 0
        for w in widths:
            grads.append(g[:, start : start + w])
            start += w
        return tuple(grads)

    return Tensor._from_op(out_data, tuple(tensors), grad_fn)


def concat_rows(tensors: Sequence[Tensor]) -> Tensor:
    """Concatenate 2-D tensors along rows."""
    out_data = np.concatenate([t.data for t in tensors], axis=0)
    heights = [t.data.shape[0] for t in tensors]

    def grad_fn(g):
        grads = []
        start = 0
        for h in heights:
            grads.append(g[start : start + h])
            start += h
        return tuple(grads)

    return Tensor._from_op(out_data, tuple(tensors), grad_fn)


def log_softmax_rows(t: Tensor) -> Tensor:
    """Row-wise log-softmax, shift-stabilized with a constant max."""
    shift = Tensor(t.data.max(axis=1, keepdims=True))
    z = t - shift
    return z - z.exp().sum(axis=1, keepdims=True).log()
