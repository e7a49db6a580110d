#!/usr/bin/env python3
"""
Forward-mode dual arrays for the element kernels.

A DualArray carries a value array of shape S together with k tangent arrays
stacked as shape (k,) + S, so one kernel evaluation yields the primal result
and k directional derivatives at once. Kernels are written against plain
numpy semantics; when every input is a plain float/ndarray they run as
ordinary numpy code.
"""

import logging
from typing import Any, Iterable, List, Sequence, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

Number = Union[float, int, np.ndarray, "DualArray"]


class DualArray:
    """Value plus stacked tangents, propagated with the chain rule."""

    # ndarray binary operators defer to our reflected methods
    __array_ufunc__ = None

    def __init__(self, val: Any, dot: Any):
        self.val = np.asarray(val, dtype=float)
        self.dot = np.asarray(dot, dtype=float)
        if self.dot.shape[1:] != self.val.shape:
            raise ValueError(
                f"Tangent shape {self.dot.shape} does not match value shape {self.val.shape}"
            )

    # ------- shape helpers -------
    @property
    def shape(self) -> Tuple[int, ...]:
        return self.val.shape

    @property
    def ndim(self) -> int:
        return self.val.ndim

    @property
    def ntangents(self) -> int:
        return self.dot.shape[0]

    def _lift(self, ndim: int) -> np.ndarray:
        pad = (1,) * (ndim - self.val.ndim)
        return self.dot.reshape((self.ntangents,) + pad + self.val.shape)

    @staticmethod
    def _finish(val: np.ndarray, dot: np.ndarray) -> "DualArray":
        target = (dot.shape[0],) + np.shape(val)
        if dot.shape != target:
            dot = np.broadcast_to(dot, target).copy()
        return DualArray(val, dot)

    # ------- arithmetic -------
    def __add__(self, other: Number) -> "DualArray":
        ov = value(other)
        val = self.val + ov
        dot = self._lift(val.ndim)
        if isinstance(other, DualArray):
            dot = dot + other._lift(val.ndim)
        return self._finish(val, dot)

    __radd__ = __add__

    def __neg__(self) -> "DualArray":
        return DualArray(-self.val, -self.dot)

    def __sub__(self, other: Number) -> "DualArray":
        return self + (-other)

    def __rsub__(self, other: Number) -> "DualArray":
        return (-self) + other

    def __mul__(self, other: Number) -> "DualArray":
        ov = value(other)
        val = self.val * ov
        dot = self._lift(val.ndim) * ov
        if isinstance(other, DualArray):
            dot = dot + self.val * other._lift(val.ndim)
        return self._finish(val, dot)

    __rmul__ = __mul__

    def __truediv__(self, other: Number) -> "DualArray":
        ov = value(other)
        val = self.val / ov
        dot = self._lift(val.ndim) / ov
        if isinstance(other, DualArray):
            dot = dot - val * other._lift(val.ndim) / ov
        return self._finish(val, dot)

    def __rtruediv__(self, other: Number) -> "DualArray":
        ov = np.asarray(other, dtype=float)
        val = ov / self.val
        dot = -val * self._lift(val.ndim) / self.val
        return self._finish(val, dot)

    def __pow__(self, exponent: float) -> "DualArray":
        if isinstance(exponent, DualArray):
            raise TypeError("DualArray exponents are not supported")
        val = self.val ** exponent
        dot = exponent * self.val ** (exponent - 1) * self.dot
        return DualArray(val, dot)

    def __matmul__(self, other: Number) -> "DualArray":
        return matmul(self, other)

    def __rmatmul__(self, other: Number) -> "DualArray":
        return matmul(other, self)

    # ------- indexing and reductions -------
    def __getitem__(self, index: Any) -> "DualArray":
        if not isinstance(index, tuple):
            index = (index,)
        return DualArray(self.val[index], self.dot[(slice(None),) + index])

    @property
    def T(self) -> "DualArray":
        if self.ndim != 2:
            raise ValueError("Transpose is defined for 2-D dual arrays only")
        return DualArray(self.val.T, np.swapaxes(self.dot, 1, 2))

    def sum(self, axis: Any = None) -> "DualArray":
        if axis is None:
            return DualArray(self.val.sum(), self.dot.reshape(self.ntangents, -1).sum(axis=1))
        axis = axis % self.ndim
        return DualArray(self.val.sum(axis=axis), self.dot.sum(axis=axis + 1))

    def __repr__(self) -> str:
        return f"DualArray(shape={self.shape}, tangents={self.ntangents})"


# ------- module-level helpers -------
def is_dual(x: Any) -> bool:
    return isinstance(x, DualArray)


def value(x: Any) -> np.ndarray:
    """Primal part of a dual or plain array."""
    if isinstance(x, DualArray):
        return x.val
    return np.asarray(x, dtype=float)


def tangents(x: Any, ntangents: int) -> np.ndarray:
    """Tangent stack of x; zeros for plain inputs."""
    if isinstance(x, DualArray):
        return x.dot
    return np.zeros((ntangents,) + np.shape(x))


def seed(values: Sequence[float]) -> List[DualArray]:
    """One dual scalar per value, each with its own unit tangent direction."""
    k = len(values)
    eye = np.eye(k)
    return [DualArray(float(v), eye[i]) for i, v in enumerate(values)]


def sqrt(x: Number) -> Number:
    if isinstance(x, DualArray):
        root = np.sqrt(x.val)
        return DualArray(root, x.dot / (2.0 * root))
    return np.sqrt(x)


def norm(v: Number) -> Number:
    return sqrt((v * v).sum())


def dot3(a: Number, b: Number) -> Number:
    return (a * b).sum()


def cross(a: Number, b: Number) -> Number:
    """Cross product of two 3-vectors."""
    if not (is_dual(a) or is_dual(b)):
        return np.cross(a, b)
    return stack([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])


def stack(items: Iterable[Number], axis: int = 0) -> Number:
    """np.stack over a mix of dual and plain entries."""
    items = list(items)
    duals = [x for x in items if isinstance(x, DualArray)]
    if not duals:
        return np.stack([np.asarray(x, dtype=float) for x in items], axis=axis)
    k = duals[0].ntangents
    shape = np.broadcast_shapes(*[np.shape(value(x)) for x in items])
    vals = [np.broadcast_to(value(x), shape) for x in items]
    dots = [np.broadcast_to(tangents(x, k), (k,) + shape) for x in items]
    axis = axis % (len(shape) + 1)
    return DualArray(np.stack(vals, axis=axis), np.stack(dots, axis=axis + 1))


def tensordot(a: Number, b: np.ndarray, axes: int) -> Number:
    """Contract the trailing `axes` axes of a with the leading axes of a constant b."""
    if isinstance(b, DualArray):
        raise TypeError("Right operand of tensordot must be a constant array")
    if isinstance(a, DualArray):
        return DualArray(np.tensordot(a.val, b, axes), np.tensordot(a.dot, b, axes))
    return np.tensordot(a, b, axes)


def matmul(a: Number, b: Number) -> Number:
    """Matrix product where either side may carry tangents (1-D or 2-D operands)."""
    av, bv = value(a), value(b)
    val = av @ bv
    if not (is_dual(a) or is_dual(b)):
        return val
    k = a.ntangents if is_dual(a) else b.ntangents
    dot = np.zeros((k,) + np.shape(val))
    if is_dual(a):
        dot = dot + np.matmul(a.dot, bv)
    if is_dual(b):
        if bv.ndim >= 2:
            dot = dot + np.matmul(av, b.dot)
        elif av.ndim >= 2:
            dot = dot + np.matmul(b.dot, av.T)
        else:
            dot = dot + b.dot @ av
    return DualArray(val, dot)


def zeros_like(x: Number, shape: Tuple[int, ...]) -> Number:
    """Zero array of `shape` that carries tangents when x does."""
    if isinstance(x, DualArray):
        return DualArray(np.zeros(shape), np.zeros((x.ntangents,) + shape))
    return np.zeros(shape)
