"""Batched forward-mode dual numbers over numpy arrays.

A :class:`Dual` carries a primal array of shape ``S`` and a tangent array of
shape ``(P,) + S``: one tangent per seed direction, all propagated in a single
pass. Seeding the parameter vector with the identity yields full Jacobians.
"""
from __future__ import annotations

import numpy as np


class Dual:
    __slots__ = ("primal", "tangent")
    __array_ufunc__ = None  # make ndarray operators defer to ours

    def __init__(self, primal, tangent):
        self.primal = np.asarray(primal, dtype=np.float64)
        self.tangent = np.asarray(tangent, dtype=np.float64)

    @classmethod
    def seed(cls, x) -> "Dual":
        """Variable with one tangent direction per component of the 1-D array ``x``."""
        x = np.asarray(x, dtype=np.float64)
        return cls(x, np.eye(x.size))

    @property
    def shape(self):
        return self.primal.shape

    def __getitem__(self, idx) -> "Dual":
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Dual(self.primal[idx], self.tangent[(slice(None),) + idx])

    def reshape(self, *shape) -> "Dual":
        p = self.primal.reshape(*shape)
        return Dual(p, self.tangent.reshape((self.tangent.shape[0],) + p.shape))

    @property
    def T(self) -> "Dual":
        return Dual(self.primal.T, np.swapaxes(self.tangent, -1, -2))

    def _lift(self, ndim: int) -> np.ndarray:
        # left-pad the primal axes of the tangent so numpy broadcasting lines up
        extra = ndim - self.primal.ndim
        t = self.tangent
        return t.reshape((t.shape[0],) + (1,) * extra + self.primal.shape)

    def __add__(self, other) -> "Dual":
        if isinstance(other, Dual):
            p = self.primal + other.primal
            return Dual(p, self._lift(p.ndim) + other._lift(p.ndim))
        p = self.primal + other
        return Dual(p, np.broadcast_to(self._lift(p.ndim), (self.tangent.shape[0],) + p.shape))

    __radd__ = __add__

    def __neg__(self) -> "Dual":
        return Dual(-self.primal, -self.tangent)

    def __sub__(self, other) -> "Dual":
        return self + (-other)

    def __rsub__(self, other) -> "Dual":
        return (-self) + other

    def __mul__(self, other) -> "Dual":
        if isinstance(other, Dual):
            p = self.primal * other.primal
            return Dual(p, self._lift(p.ndim) * other.primal + self.primal * other._lift(p.ndim))
        p = self.primal * other
        return Dual(p, self._lift(p.ndim) * other)

    __rmul__ = __mul__

    def __matmul__(self, other) -> "Dual":
        if isinstance(other, Dual):
            return Dual(self.primal @ other.primal,
                        self.tangent @ other.primal + _left_apply(self.primal, other))
        return Dual(self.primal @ other, self.tangent @ other)

    def __rmatmul__(self, other) -> "Dual":
        return Dual(other @ self.primal, _left_apply(np.asarray(other), self))

    def apply(self, value, derivative) -> "Dual":
        """Elementwise map with known value ``g(primal)`` and slope ``g'(primal)``."""
        return Dual(value, self.tangent * derivative)


def _left_apply(a: np.ndarray, x: Dual) -> np.ndarray:
    """Tangent of ``a @ x`` for constant ``a``."""
    if x.primal.ndim == 1:
        # (K, j) tangent: a vector per seed direction
        return x.tangent @ a.T
    return a @ x.tangent


def primal(x):
    return x.primal if isinstance(x, Dual) else np.asarray(x)
