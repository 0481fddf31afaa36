"""Minimal tape-based reverse-mode differentiation over numpy arrays.

Only the primitives needed by the network and the PPO losses are provided:
dense algebra (matmul, elementwise arithmetic with broadcasting), tanh/relu,
exp/log/square, clip, elementwise min, sums and means.  Anything else is a
non-goal.
"""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _is_basic_index(idx) -> bool:
    parts = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(p, (int, slice, type(Ellipsis), type(None))) for p in parts)


class Tensor:
    """A value on the tape.  ``grad`` is filled in by :meth:`backward`."""

    __slots__ = ("value", "grad", "_parents", "_backward")
    __array_ufunc__ = None

    def __init__(self, value, parents: tuple[Tensor, ...] = (), backward: Callable | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self._parents = parents
        self._backward = backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def __repr__(self) -> str:
        return f"Tensor({self.value!r})"

    # -- graph construction -------------------------------------------------

    @staticmethod
    def _lift(x) -> Tensor:
        return x if isinstance(x, Tensor) else Tensor(x)

    def __add__(self, other):
        other = Tensor._lift(other)
        a, b = self, other

        def back(g):
            return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

        return Tensor(a.value + b.value, (a, b), back)

    __radd__ = __add__

    def __sub__(self, other):
        other = Tensor._lift(other)
        a, b = self, other

        def back(g):
            return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

        return Tensor(a.value - b.value, (a, b), back)

    def __rsub__(self, other):
        return Tensor._lift(other) - self

    def __mul__(self, other):
        other = Tensor._lift(other)
        a, b = self, other

        def back(g):
            return _unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)

        return Tensor(a.value * b.value, (a, b), back)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = Tensor._lift(other)
        a, b = self, other

        def back(g):
            return (
                _unbroadcast(g / b.value, a.shape),
                _unbroadcast(-g * a.value / (b.value * b.value), b.shape),
            )

        return Tensor(a.value / b.value, (a, b), back)

    def __rtruediv__(self, other):
        return Tensor._lift(other) / self

    def __neg__(self):
        a = self
        return Tensor(-a.value, (a,), lambda g: (-g,))

    def __matmul__(self, other):
        other = Tensor._lift(other)
        a, b = self, other

        def back(g):
            ga = g @ b.value.T if b.ndim == 2 else np.outer(g, b.value)
            if a.ndim == 2:
                gb = a.value.T @ g
            else:
                gb = np.outer(a.value, g)
            return ga, gb

        return Tensor(a.value @ b.value, (a, b), back)

    def __rmatmul__(self, other):
        return Tensor._lift(other) @ self

    def __pow__(self, power: int):
        if power != 2:
            raise NotImplementedError("only squaring is supported")
        return square(self)

    def __getitem__(self, idx):
        a = self

        def back(g):
            out = np.zeros_like(a.value)
            if _is_basic_index(idx):
                out[idx] += g
            else:
                np.add.at(out, idx, g)
            return (out,)

        return Tensor(a.value[idx], (a,), back)

    def sum(self, axis=None):
        a = self

        def back(g):
            if axis is None:
                return (np.broadcast_to(g, a.shape).copy(),)
            return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

        return Tensor(a.value.sum(axis=axis), (a,), back)

    def mean(self, axis=None):
        n = self.value.size if axis is None else self.value.shape[axis]
        return self.sum(axis) * (1.0 / n)

    # -- reverse pass ---------------------------------------------------------

    def backward(self) -> None:
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
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
                if id(p) not in seen:
                    stack.append((p, False))

        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.value)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            node.grad = g if node.grad is None else node.grad + g
            if node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None:
                    continue
                prev = grads.get(id(parent))
                grads[id(parent)] = pg if prev is None else prev + pg


# -- elementwise primitives ---------------------------------------------------


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.value)
    return Tensor(y, (x,), lambda g: (g * (1.0 - y * y),))


def relu(x: Tensor) -> Tensor:
    mask = x.value > 0
    return Tensor(np.where(mask, x.value, 0.0), (x,), lambda g: (g * mask,))


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.value)
    return Tensor(y, (x,), lambda g: (g * y,))


def log(x: Tensor) -> Tensor:
    v = x.value
    return Tensor(np.log(v), (x,), lambda g: (g / v,))


def square(x: Tensor) -> Tensor:
    v = x.value
    return Tensor(v * v, (x,), lambda g: (2.0 * g * v,))


def clip(x: Tensor, lo, hi) -> Tensor:
    """Clamp to ``[lo, hi]``; derivative is 1 strictly inside, 0 elsewhere."""
    v = x.value
    inside = (v > lo) & (v < hi)
    return Tensor(np.clip(v, lo, hi), (x,), lambda g: (g * inside,))


def minimum(a, b) -> Tensor:
    """Elementwise min; the gradient follows the attained branch, ties go to ``a``."""
    a, b = Tensor._lift(a), Tensor._lift(b)
    take_a = a.value <= b.value

    def back(g):
        return (
            _unbroadcast(np.where(take_a, g, 0.0), a.shape),
            _unbroadcast(np.where(take_a, 0.0, g), b.shape),
        )

    return Tensor(np.where(take_a, a.value, b.value), (a, b), back)


def where(mask: np.ndarray, a, b) -> Tensor:
    a, b = Tensor._lift(a), Tensor._lift(b)

    def back(g):
        return (
            _unbroadcast(np.where(mask, g, 0.0), a.shape),
            _unbroadcast(np.where(mask, 0.0, g), b.shape),
        )

    return Tensor(np.where(mask, a.value, b.value), (a, b), back)


def value_of(x) -> np.ndarray:
    return x.value if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def grad_of(
    loss_fn: Callable[[dict[str, Tensor]], Tensor], arrays: dict[str, np.ndarray]
) -> tuple[float, dict[str, np.ndarray]]:
    """Evaluate ``loss_fn`` on leaf tensors wrapping ``arrays`` and differentiate it."""
    leaves = {k: Tensor(v) for k, v in arrays.items()}
    loss = loss_fn(leaves)
    if loss.value.shape != ():
        raise ValueError(f"loss must be a scalar, got shape {loss.value.shape}")
    loss.backward()
    grads = {
        k: (t.grad if t.grad is not None else np.zeros_like(t.value)) for k, t in leaves.items()
    }
    return float(loss.value), grads


# numpy/Tensor dispatch used by code paths that run both with and without a tape


def op_tanh(x):
    return tanh(x) if isinstance(x, Tensor) else np.tanh(x)


def op_relu(x):
    return relu(x) if isinstance(x, Tensor) else np.maximum(x, 0.0)


def op_exp(x):
    return exp(x) if isinstance(x, Tensor) else np.exp(x)


def op_clip(x, lo, hi):
    return clip(x, lo, hi) if isinstance(x, Tensor) else np.clip(x, lo, hi)


def op_sum(x, axis=None):
    return x.sum(axis) if isinstance(x, Tensor) else np.sum(x, axis=axis)


def any_tensor(xs: Iterable) -> bool:
    return any(isinstance(x, Tensor) for x in xs)
