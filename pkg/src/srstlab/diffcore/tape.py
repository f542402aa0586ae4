"""Reverse-mode differentiation over float64 numpy arrays.

Small and explicit: every operation produces a `Var` holding the forward
value and, when some ancestor is a differentiable leaf, closures that push
a cotangent back to the parents.  All network and loss operations in this
package are compositions of these primitives, so one backward pass yields
exact gradients for any of them.

Values are always float64.  Nothing here is in-place; a tape is built per
loss evaluation and discarded, which keeps repeated runs bit-identical.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

Array = np.ndarray


def _as_f64(x) -> Array:
    return np.asarray(x, dtype=np.float64)


class Var:
    """One node of a differentiation tape."""

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_vjps")

    def __init__(self, value, requires_grad: bool = False,
                 parents: tuple["Var", ...] = (),
                 vjps: tuple[Callable[[Array], Array], ...] = ()):
        self.value = _as_f64(value)
        self.grad: Array | None = None
        needs = requires_grad or any(p.requires_grad for p in parents)
        self.requires_grad = needs
        # constants keep no history, which prunes the tape automatically
        self._parents = parents if needs else ()
        self._vjps = vjps if needs else ()

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def item(self) -> float:
        if self.value.size != 1:
            raise ValueError(f"item() requires a size-1 value, got shape {self.value.shape}")
        return float(self.value)

    def detach(self) -> "Var":
        """Same value, no gradient history."""
        return Var(self.value)

    def __add__(self, other): return add(self, other)
    __radd__ = __add__

    def __sub__(self, other): return sub(self, other)

    def __rsub__(self, other): return sub(other, self)

    def __mul__(self, other): return mul(self, other)
    __rmul__ = __mul__

    def __truediv__(self, other): return div(self, other)

    def __neg__(self): return mul(self, -1.0)

    def __repr__(self):
        return f"Var(shape={self.value.shape}, requires_grad={self.requires_grad})"


def as_var(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


def _unbroadcast(g: Array, shape: tuple[int, ...]) -> Array:
    """Sum a cotangent down to `shape` (reverse of numpy broadcasting)."""
    g = np.asarray(g, dtype=np.float64)
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def add(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    return Var(a.value + b.value, parents=(a, b),
               vjps=(lambda g: _unbroadcast(g, a.value.shape),
                     lambda g: _unbroadcast(g, b.value.shape)))


def sub(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    return Var(a.value - b.value, parents=(a, b),
               vjps=(lambda g: _unbroadcast(g, a.value.shape),
                     lambda g: _unbroadcast(-g, b.value.shape)))


def mul(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    return Var(a.value * b.value, parents=(a, b),
               vjps=(lambda g: _unbroadcast(g * b.value, a.value.shape),
                     lambda g: _unbroadcast(g * a.value, b.value.shape)))


def div(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    return Var(a.value / b.value, parents=(a, b),
               vjps=(lambda g: _unbroadcast(g / b.value, a.value.shape),
                     lambda g: _unbroadcast(-g * a.value / (b.value * b.value), b.value.shape)))


def matmul(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    if a.value.ndim != 2 or b.value.ndim != 2:
        raise ValueError(f"matmul expects 2-d operands, got {a.value.shape} @ {b.value.shape}")
    return Var(a.value @ b.value, parents=(a, b),
               vjps=(lambda g: g @ b.value.T,
                     lambda g: a.value.T @ g))


def relu(a) -> Var:
    a = as_var(a)
    mask = a.value > 0.0
    return Var(np.where(mask, a.value, 0.0), parents=(a,),
               vjps=(lambda g: g * mask,))


def tanh(a) -> Var:
    a = as_var(a)
    t = np.tanh(a.value)
    return Var(t, parents=(a,), vjps=(lambda g: g * (1.0 - t * t),))


def exp(a) -> Var:
    a = as_var(a)
    e = np.exp(a.value)
    return Var(e, parents=(a,), vjps=(lambda g: g * e,))


def log(a, floor: float | None = None) -> Var:
    """Natural log; with `floor` set, log(max(a, floor)) with zero gradient
    on the clamped side."""
    a = as_var(a)
    if floor is None:
        v = np.log(a.value)
        return Var(v, parents=(a,), vjps=(lambda g: g / a.value,))
    clipped = np.maximum(a.value, floor)
    open_side = a.value > floor
    inv = np.where(open_side, 1.0 / clipped, 0.0)
    return Var(np.log(clipped), parents=(a,), vjps=(lambda g: g * inv,))


def reshape(a, shape: tuple[int, ...]) -> Var:
    a = as_var(a)
    old = a.value.shape
    return Var(a.value.reshape(shape), parents=(a,),
               vjps=(lambda g: g.reshape(old),))


def vsum(a, axis: int | None = None, keepdims: bool = False) -> Var:
    a = as_var(a)
    v = a.value.sum(axis=axis, keepdims=keepdims)

    def vjp(g: Array) -> Array:
        if axis is None:
            return np.broadcast_to(g, a.value.shape).copy()
        gg = g if keepdims else np.expand_dims(g, axis)
        return np.broadcast_to(gg, a.value.shape).copy()

    return Var(v, parents=(a,), vjps=(vjp,))


def vmean(a) -> Var:
    a = as_var(a)
    return mul(vsum(a), 1.0 / a.value.size)


def softmax_rows(logits) -> Var:
    """Row-wise softmax along the last axis, max-subtracted for overflow
    safety.  The subtracted maximum is a constant shift, which leaves both
    the value and the gradient of the softmax unchanged."""
    z = as_var(logits)
    m = z.value.max(axis=-1, keepdims=True)
    e = exp(sub(z, m))
    s = vsum(e, axis=-1, keepdims=True)
    return div(e, s)


def backward(root: Var) -> None:
    """Accumulate gradients of a scalar `root` into every leaf's .grad."""
    if root.value.size != 1:
        raise ValueError(f"backward requires a scalar loss, got shape {root.value.shape}")
    order: list[Var] = []
    visited: set[int] = set()
    stack: list[tuple[Var, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))
    root.grad = np.ones_like(root.value)
    for node in reversed(order):
        g = node.grad
        if g is None:
            continue
        for parent, vjp in zip(node._parents, node._vjps):
            if not parent.requires_grad:
                continue
            contrib = vjp(g)
            parent.grad = contrib if parent.grad is None else parent.grad + contrib
