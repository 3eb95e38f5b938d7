"""Squared and softmax cross-entropy costs on flattened outputs.

Squared cost is ``|x - y|^2 / (2N)``; cross-entropy is the *sum* over samples
of ``-y_n . log softmax(x_n)`` (no 1/N), so its per-sample gradient is exactly
``softmax(x_n) - y_n``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg

LOSS_KINDS = ("squared", "cross_entropy")


def _check_kind(kind: str) -> None:
    if kind not in LOSS_KINDS:
        raise ValueError(f"loss kind must be one of {LOSS_KINDS}, got {kind!r}")


def _blocks(x_flat, y_flat, n_samples: int):
    x = np.asarray(x_flat, dtype=np.float64)
    y = np.asarray(y_flat, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"output and label vectors must be 1-D of equal length, got {x.shape} and {y.shape}")
    if n_samples < 1 or x.size % n_samples:
        raise ValueError(f"length {x.size} is not divisible into {n_samples} samples")
    return x.reshape(n_samples, -1), y.reshape(n_samples, -1)


def _check_simplex(y: np.ndarray) -> None:
    if np.any(y < 0) or np.any(np.abs(y.sum(axis=1) - 1.0) > 1e-12):
        bad = int(np.flatnonzero(np.any(y < 0, axis=1) | (np.abs(y.sum(axis=1) - 1.0) > 1e-12))[0])
        raise ValueError(f"cross-entropy needs simplex labels; label block {bad} is {y[bad].tolist()}")


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def cost(kind: str, x_flat, y_flat, n_samples: int) -> float:
    _check_kind(kind)
    x, y = _blocks(x_flat, y_flat, n_samples)
    if kind == "squared":
        return float(np.sum((x - y) ** 2) / (2 * n_samples))
    _check_simplex(y)
    return float(-np.sum(y * log_softmax(x)))


def grad_x(kind: str, x_flat, y_flat, n_samples: int) -> np.ndarray:
    _check_kind(kind)
    x, y = _blocks(x_flat, y_flat, n_samples)
    if kind == "squared":
        return ((x - y) / n_samples).reshape(-1)
    _check_simplex(y)
    return (softmax(x) - y).reshape(-1)


@dataclass(frozen=True)
class HessianBlock:
    matrix: np.ndarray
    eval_point: np.ndarray


def ce_hessian_block(z) -> HessianBlock:
    """Hessian ``diag(s) - s s^T`` of ``-y . log softmax(z)`` in ``z``, with ``s = softmax(z)``."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1 or not np.all(np.isfinite(z)):
        raise ValueError("z must be a finite 1-D vector")
    s = softmax(z)
    h = -np.outer(s, s)
    # s_i (1 - s_i) cancels badly when s_i ~ 1; sum the other components instead
    others = np.array([np.sum(np.delete(s, i)) for i in range(s.size)])
    h[np.diag_indices(s.size)] = s * others
    h = 0.5 * (h + h.T)
    return HessianBlock(matrix=h, eval_point=z.copy())


@dataclass(frozen=True)
class HessianCheck:
    rank: int
    expected_rank: int
    min_eigenvalue: float
    restricted_min_eigenvalue: float  # smallest eigenvalue on the complement of u_Q
    collapsed: bool  # rank read below Q-1 because softmax components underflowed

    @property
    def psd(self) -> bool:
        return self.min_eigenvalue >= -1e-10


def sum_free_basis(q: int) -> np.ndarray:
    """Orthonormal basis (columns) of ``{v : v . u_Q = 0}``."""
    u = np.ones((q, 1)) / np.sqrt(q)
    f = linalg.svd(u)
    return f.u[:, 1:]


def ce_hessian_rank_psd_check(z) -> HessianCheck:
    h = ce_hessian_block(z).matrix
    q = h.shape[0]
    rank = linalg.numerical_rank(h)
    eig = np.linalg.eigvalsh(h)
    if q > 1:
        b = sum_free_basis(q)
        restricted = float(np.linalg.eigvalsh(b.T @ h @ b)[0])
    else:
        restricted = float("nan")
    return HessianCheck(rank=rank, expected_rank=q - 1, min_eigenvalue=float(eig[0]),
                        restricted_min_eigenvalue=restricted, collapsed=rank < q - 1)
