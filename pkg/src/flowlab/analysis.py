"""Diagnostics: cross-entropy equilibria, hyperplane invariants, output-layer collapse, NTK blocks."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import linalg, losses
from .flows import step
from .models import Dataset, ModelSpec, jacobian


def _positive_simplex(y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if np.any(y <= 0):
        raise ValueError(f"label must have strictly positive components for a finite minimum, got {y.tolist()}")
    if abs(y.sum() - 1.0) > 1e-12:
        raise ValueError(f"label must sum to 1, sums to {y.sum()!r}")
    return y


def ce_equilibrium(f0, y) -> np.ndarray:
    """Limit of ``f' = y - softmax(f)`` from ``f0``: ``log y + mean(f0 - log y) * u``.

    >>> ce_equilibrium([0.0, 0.0], [0.5, 0.5])
    array([0., 0.])
    """
    f0 = np.asarray(f0, dtype=np.float64)
    y = _positive_simplex(y)
    log_y = np.log(y)
    return log_y + np.mean(f0 - log_y)


@dataclass(frozen=True)
class CeConvergence:
    terminal_f: np.ndarray
    formula_f: np.ndarray
    distance_to_formula: float
    hyperplane_drift: float  # max over steps of |sum(f_t) - sum(f_0)|
    terminal_cost: float
    entropy: float  # -y . log y, the cost at any equilibrium


def ce_flow_convergence(f0, y, horizon: float = 50.0, step_size: float = 1e-2) -> CeConvergence:
    """RK4 on the per-sample cross-entropy flow ``f' = y - softmax(f)`` up to ``horizon``."""
    f = np.array(f0, dtype=np.float64)
    y = _positive_simplex(y)
    c0 = f.sum()
    n_steps = int(np.ceil(horizon / step_size - 1e-9))
    drift = 0.0

    def rhs(_t, z):
        return y - losses.softmax(z)

    t = 0.0
    for k in range(n_steps):
        t_next = min((k + 1) * step_size, horizon)
        f = step(rhs, t, f, t_next - t)
        t = t_next
        drift = max(drift, abs(f.sum() - c0))
    target = ce_equilibrium(f0, y)
    return CeConvergence(terminal_f=f, formula_f=target,
                         distance_to_formula=float(np.linalg.norm(f - target)),
                         hyperplane_drift=float(drift),
                         terminal_cost=losses.cost("cross_entropy", f, y, 1),
                         entropy=float(-np.sum(y * np.log(y))))


@dataclass(frozen=True)
class HyperplaneRecord:
    sums: np.ndarray  # (n_times, N) per-sample output sums c_n(t)
    reference: np.ndarray  # (N,) sums at the first time

    @property
    def drift(self) -> np.ndarray:
        return np.abs(self.sums - self.reference)

    @property
    def max_drift(self) -> float:
        return float(self.drift.max())


def hyperplane_conservation(outputs, output_dim: int) -> HyperplaneRecord:
    """Track ``c_n(t) = sum_j f_t(x_n)_j`` along a sequence of flattened outputs ``(n_times, QN)``."""
    x = np.atleast_2d(np.asarray(outputs, dtype=np.float64))
    sums = x.reshape(x.shape[0], -1, output_dim).sum(axis=2)
    return HyperplaneRecord(sums=sums, reference=sums[0].copy())


@dataclass(frozen=True)
class CollapseMetrics:
    class_means: np.ndarray  # (n_classes, Q)
    class_labels: np.ndarray  # (n_classes, Q)
    class_sizes: np.ndarray
    deviations: np.ndarray  # (N, Q) sample minus its class mean
    within_class_energy: float  # sum |Delta|^2
    mean_mismatch_energy: float  # sum_j N_j |mean_j - y_j|^2
    total: float  # 2 N * squared cost

    @property
    def decomposition_residual(self) -> float:
        return abs(self.total - self.within_class_energy - self.mean_mismatch_energy)


def collapse_metrics(x_flat, labels, classes: Sequence[int], n_classes: Optional[int] = None) -> CollapseMetrics:
    """Class means, within-class deviations and the split of ``2N * cost`` into the two energies.

    ``labels`` is ``(N, Q)``; every sample in a class must carry that class's label.
    """
    labels = np.asarray(labels, dtype=np.float64)
    n, q = labels.shape
    x = np.asarray(x_flat, dtype=np.float64).reshape(n, q)
    cls = np.asarray(classes, dtype=int)
    if cls.shape != (n,):
        raise ValueError(f"need one class index per sample ({n}), got {cls.shape}")
    if np.any(cls < 0):
        raise ValueError("class indices must be >= 0")
    n_classes = int(cls.max()) + 1 if n_classes is None else int(n_classes)
    means = np.zeros((n_classes, q))
    class_labels = np.zeros((n_classes, q))
    sizes = np.bincount(cls, minlength=n_classes)
    if np.any(sizes == 0):
        raise ValueError(f"class {int(np.flatnonzero(sizes == 0)[0])} has no samples")
    for j in range(n_classes):
        members = cls == j
        means[j] = x[members].mean(axis=0)
        lab = labels[members]
        if np.any(lab != lab[0]):
            raise ValueError(f"samples of class {j} carry different labels")
        class_labels[j] = lab[0]
    dev = x - means[cls]
    within = float(np.sum(dev ** 2))
    mismatch = float(np.sum(sizes * np.sum((means - class_labels) ** 2, axis=1)))
    total = 2 * n * losses.cost("squared", x.reshape(-1), labels.reshape(-1), n)
    return CollapseMetrics(means, class_labels, sizes, dev, within, mismatch, total)


@dataclass(frozen=True)
class NtkBlocks:
    blocks: np.ndarray  # (N, N, Q, Q); blocks[i, j] = Df(x_i) Df(x_j)^T
    assembled: np.ndarray  # (QN, QN)
    min_eigenvalue: float
    rank_tolerance: float

    @property
    def positive_definite(self) -> bool:
        return self.min_eigenvalue > self.rank_tolerance


def ntk_blocks(spec: ModelSpec, theta, data: Dataset) -> NtkBlocks:
    """Per-pair tangent-kernel blocks from per-sample Jacobians, and their ``QN x QN`` assembly."""
    per_sample = [jacobian(spec, theta, Dataset(data.inputs[i:i + 1], data.labels[i:i + 1]))
                  for i in range(data.n_samples)]
    n, q = data.n_samples, spec.output_dim
    blocks = np.empty((n, n, q, q))
    for i in range(n):
        for j in range(n):
            blocks[i, j] = per_sample[i] @ per_sample[j].T
    assembled = blocks.transpose(0, 2, 1, 3).reshape(n * q, n * q)
    eig = np.linalg.eigvalsh(0.5 * (assembled + assembled.T))
    tol = linalg.svd(assembled).rank_tolerance
    return NtkBlocks(blocks=blocks, assembled=assembled, min_eigenvalue=float(eig[0]), rank_tolerance=tol)
