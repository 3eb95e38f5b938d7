"""Dense real matrix kernel: SVD, Moore-Penrose pseudoinverse, projectors, rank.

Everything here is a pure function of float64 numpy arrays. The SVD itself is
LAPACK's (via :func:`numpy.linalg.svd`); rank decisions, pseudoinverses and
projectors are assembled on top of it with an explicit rank tolerance.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

#: Relative factor in the default rank tolerance ``max(m, n) * sigma_max * EPS_SCALE``.
EPS_SCALE = 1e-12


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate ``a`` as a finite 2-D float64 matrix and return a read-only copy."""
    arr = np.array(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must have at least one row and column, got shape {arr.shape}")
    bad = np.argwhere(~np.isfinite(arr))
    if bad.size:
        i, j = bad[0]
        raise ValueError(f"{name} has non-finite entry {arr[i, j]!r} at ({i}, {j})")
    arr.setflags(write=False)
    return arr


def default_rank_tolerance(shape: Sequence[int], sigma_max: float) -> float:
    return max(shape) * float(sigma_max) * EPS_SCALE


@dataclass(frozen=True)
class SvdFactors:
    """Full SVD ``a = u @ diag(s) @ v.T`` plus the rank decision taken on it."""

    u: np.ndarray
    singular_values: np.ndarray
    v: np.ndarray
    rank_tolerance: float
    numerical_rank: int

    @property
    def range_basis(self) -> np.ndarray:
        """Orthonormal basis (columns) of ran(A)."""
        return self.u[:, : self.numerical_rank]

    @property
    def corange_basis(self) -> np.ndarray:
        """Orthonormal basis (columns) of ran(A^T)."""
        return self.v[:, : self.numerical_rank]

    @property
    def kernel_basis(self) -> np.ndarray:
        """Orthonormal basis (columns) of ker(A)."""
        return self.v[:, self.numerical_rank:]


def svd(a, rank_tol: Optional[float] = None) -> SvdFactors:
    a = as_matrix(a)
    u, s, vt = np.linalg.svd(a, full_matrices=True)
    smax = s[0] if s.size else 0.0
    tol = default_rank_tolerance(a.shape, smax) if rank_tol is None else float(rank_tol)
    rank = int(np.count_nonzero(s > tol))
    return SvdFactors(u=u, singular_values=s, v=vt.T, rank_tolerance=tol, numerical_rank=rank)


def numerical_rank(a, rank_tol: Optional[float] = None) -> int:
    return svd(a, rank_tol).numerical_rank


def pseudoinverse(a, rank_tol: Optional[float] = None) -> np.ndarray:
    """Moore-Penrose pseudoinverse via SVD, zeroing singular values at or below the tolerance.

    >>> pseudoinverse([[1.0, 2.0], [2.0, 4.0]]) * 25
    array([[1., 2.],
           [2., 4.]])
    """
    f = svd(a, rank_tol)
    r = f.numerical_rank
    return (f.v[:, :r] / f.singular_values[:r]) @ f.u[:, :r].T


def range_projector(a, rank_tol: Optional[float] = None) -> np.ndarray:
    """Orthogonal projector ``A A^+`` onto ran(A)."""
    basis = svd(a, rank_tol).range_basis
    return basis @ basis.T


def corange_projector(a, rank_tol: Optional[float] = None) -> np.ndarray:
    """Orthogonal projector ``A^+ A`` onto ran(A^T)."""
    basis = svd(a, rank_tol).corange_basis
    return basis @ basis.T


@dataclass(frozen=True)
class PenroseReport:
    """Residuals of the four Penrose identities for a candidate ``X`` of ``A^+``.

    Relative residuals divide by the Frobenius norm of the matrix the identity
    should reproduce (``A``, ``X``, ``AX``, ``XA``); a zero reference norm falls
    back to the absolute residual.
    """

    absolute: tuple
    relative: tuple

    @property
    def max_relative(self) -> float:
        return max(self.relative)

    def passes(self, tol: float) -> bool:
        return self.max_relative <= tol


def _rel(diff: np.ndarray, ref: np.ndarray) -> tuple:
    num = float(np.linalg.norm(diff))
    den = float(np.linalg.norm(ref))
    return num, (num / den if den > 0 else num)


def verify_penrose(a, a_pinv) -> PenroseReport:
    a = as_matrix(a, "a")
    x = as_matrix(a_pinv, "a_pinv")
    if x.shape != a.shape[::-1]:
        raise ValueError(f"pseudoinverse candidate must have shape {a.shape[::-1]}, got {x.shape}")
    ax = a @ x
    xa = x @ a
    pairs = [
        _rel(ax @ a - a, a),
        _rel(xa @ x - x, x),
        _rel(ax.T - ax, ax),
        _rel(xa.T - xa, xa),
    ]
    return PenroseReport(absolute=tuple(p[0] for p in pairs), relative=tuple(p[1] for p in pairs))


def kernel_agreement_check(a, probes: Iterable, tol: float = 1e-8) -> bool:
    """Check ker(A^T A) = ker(A^+ A) on the given probe vectors.

    A probe counts as "in the kernel" of an operator ``M`` when
    ``||M v|| <= tol * ||M||_2 * ||v||``. Returns True iff every probe is
    classified the same way by both operators.
    """
    a = as_matrix(a)
    gram = a.T @ a
    proj = pseudoinverse(a) @ a
    scales = [np.linalg.norm(gram, 2), np.linalg.norm(proj, 2)]
    for v in probes:
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (a.shape[1],):
            raise ValueError(f"probe must have length {a.shape[1]}, got shape {v.shape}")
        vn = np.linalg.norm(v)
        in_gram = np.linalg.norm(gram @ v) <= tol * scales[0] * vn
        in_proj = np.linalg.norm(proj @ v) <= tol * scales[1] * vn
        if in_gram != in_proj:
            return False
    return True
