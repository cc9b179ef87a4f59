"""Tape-based reverse-mode differentiation over numpy arrays.

Only the primitives a PPO loss needs are provided. Every node records the
name of the primitive that produced it and its vector-Jacobian product is
looked up by that name at backward time, so a graph containing anything
else fails loudly instead of silently producing a wrong gradient.
"""
from __future__ import annotations

from typing import Callable, Dict, Iterable, List, Sequence

import numpy as np

from .errors import ShapeError, UnsupportedOperationError


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    # sum out axes that numpy broadcasting introduced or stretched
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("value", "parents", "op", "ctx", "requires_grad")
    __array_priority__ = 100.0

    def __init__(self, value, requires_grad: bool = False):
        self.value = np.asarray(value, dtype=np.float64)
        self.parents: tuple = ()
        self.op = "leaf"
        self.ctx: dict = {}
        self.requires_grad = requires_grad

    @classmethod
    def _node(cls, value, parents: Sequence["Tensor"], op: str, **ctx) -> "Tensor":
        out = cls(value)
        out.parents = tuple(parents)
        out.op = op
        out.ctx = ctx
        out.requires_grad = any(p.requires_grad for p in parents)
        return out

    # makes ndarray <op> Tensor defer to the Tensor's reflected operator
    __array_ufunc__ = None

    @property
    def shape(self) -> tuple:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Tensor(op={self.op}, shape={self.shape})"

    # arithmetic -----------------------------------------------------------
    def __add__(self, other):
        other = as_tensor(other)
        return Tensor._node(self.value + other.value, (self, other), "add")

    __radd__ = __add__

    def __sub__(self, other):
        other = as_tensor(other)
        return Tensor._node(self.value - other.value, (self, other), "sub")

    def __rsub__(self, other):
        return as_tensor(other) - self

    def __neg__(self):
        return Tensor._node(-self.value, (self,), "neg")

    def __mul__(self, other):
        other = as_tensor(other)
        return Tensor._node(self.value * other.value, (self, other), "mul")

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        return Tensor._node(self.value / other.value, (self, other), "div")

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __matmul__(self, other):
        other = as_tensor(other)
        if self.value.ndim != 2 or other.value.ndim != 2:
            raise ShapeError("matmul expects two 2-D operands")
        if self.value.shape[1] != other.value.shape[0]:
            raise ShapeError(
                f"matmul shape mismatch {self.value.shape} @ {other.value.shape}"
            )
        return Tensor._node(self.value @ other.value, (self, other), "matmul")

    @property
    def T(self):
        return Tensor._node(self.value.T, (self,), "transpose")

    def square(self):
        return Tensor._node(self.value * self.value, (self,), "square")

    def tanh(self):
        return Tensor._node(np.tanh(self.value), (self,), "tanh")

    def exp(self):
        return Tensor._node(np.exp(self.value), (self,), "exp")

    def log(self):
        return Tensor._node(np.log(self.value), (self,), "log")

    def clip(self, lo: float, hi: float):
        return Tensor._node(np.clip(self.value, lo, hi), (self,), "clip", lo=lo, hi=hi)

    def sum(self, axis=None):
        return Tensor._node(self.value.sum(axis=axis), (self,), "sum", axis=axis)

    def mean(self, axis=None):
        return Tensor._node(self.value.mean(axis=axis), (self,), "mean", axis=axis)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def minimum(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor._node(np.minimum(a.value, b.value), (a, b), "minimum")


# vector-Jacobian products --------------------------------------------------
def _vjp_add(node, g):
    a, b = node.parents
    return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)


def _vjp_sub(node, g):
    a, b = node.parents
    return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)


def _vjp_mul(node, g):
    a, b = node.parents
    return _unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)


def _vjp_div(node, g):
    a, b = node.parents
    ga = g / b.value
    gb = -g * a.value / (b.value * b.value)
    return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)


def _vjp_matmul(node, g):
    a, b = node.parents
    return g @ b.value.T, a.value.T @ g


def _vjp_minimum(node, g):
    a, b = node.parents
    # ties route the gradient to the first operand
    take_a = a.value <= b.value
    return (
        _unbroadcast(np.where(take_a, g, 0.0), a.shape),
        _unbroadcast(np.where(take_a, 0.0, g), b.shape),
    )


def _vjp_clip(node, g):
    (a,) = node.parents
    inside = (a.value >= node.ctx["lo"]) & (a.value <= node.ctx["hi"])
    return (np.where(inside, g, 0.0),)


def _vjp_sum(node, g):
    (a,) = node.parents
    axis = node.ctx["axis"]
    if axis is not None:
        g = np.expand_dims(g, axis)
    return (np.broadcast_to(g, a.shape).copy(),)


def _vjp_mean(node, g):
    (a,) = node.parents
    axis = node.ctx["axis"]
    count = a.value.size if axis is None else a.value.shape[axis]
    if axis is not None:
        g = np.expand_dims(g, axis)
    return (np.broadcast_to(g / count, a.shape).copy(),)


VJPS: Dict[str, Callable] = {
    "add": _vjp_add,
    "sub": _vjp_sub,
    "mul": _vjp_mul,
    "div": _vjp_div,
    "matmul": _vjp_matmul,
    "minimum": _vjp_minimum,
    "clip": _vjp_clip,
    "sum": _vjp_sum,
    "mean": _vjp_mean,
    "neg": lambda n, g: (-g,),
    "transpose": lambda n, g: (g.T,),
    "square": lambda n, g: (2.0 * n.parents[0].value * g,),
    "tanh": lambda n, g: (g * (1.0 - n.value * n.value),),
    "exp": lambda n, g: (g * n.value,),
    "log": lambda n, g: (g / n.parents[0].value,),
}


def _topological(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    seen = set()
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
        for p in node.parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    return order


def backward(loss: Tensor, wrt: Iterable[Tensor]) -> List[np.ndarray]:
    """Gradients of the scalar ``loss`` with respect to each tensor in ``wrt``.

    Leaves that the loss does not depend on get a zero gradient.
    """
    wrt = list(wrt)
    if loss.value.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
    if loss.requires_grad:
        for node in reversed(_topological(loss)):
            if not node.parents:
                continue
            g = grads.get(id(node))
            if g is None:
                continue
            vjp = VJPS.get(node.op)
            if vjp is None:
                raise UnsupportedOperationError(f"no gradient rule for {node.op!r}")
            for parent, pg in zip(node.parents, vjp(node, g)):
                if not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
    return [
        grads[id(t)].reshape(t.shape) if id(t) in grads else np.zeros_like(t.value)
        for t in wrt
    ]
