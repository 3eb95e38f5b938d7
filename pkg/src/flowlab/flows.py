"""The alpha-family of parameter-space gradient fields and their integration.

For ``alpha in [0, 1]`` the parameter field is

    V(theta, alpha) = -(alpha (D^T D)^+ + (1 - alpha) I) grad_theta C,

interpolating plain gradient flow (alpha=0) and the pseudoinverse-adapted flow
(alpha=1). The ``(D^T D)^+`` product is applied through the SVD of ``D`` as
``V diag(sigma^-2) V^T``; the ``K x K`` Gram matrix is never formed.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import linalg, losses
from .models import Dataset, ModelSpec, forward_with_jacobian, label_flatten

INTEGRATORS = ("rk4", "euler")


class State:
    """Everything derivable from one parameter point: outputs, Jacobian, gradients."""

    def __init__(self, spec: ModelSpec, theta, data: Dataset, loss: str):
        self.spec, self.data, self.loss = spec, data, loss
        self.theta = np.asarray(theta, dtype=np.float64)
        self.x, self.d = forward_with_jacobian(spec, self.theta, data)
        self.y = label_flatten(data)
        self.grad_x = losses.grad_x(loss, self.x, self.y, data.n_samples)
        self.grad_theta = self.d.T @ self.grad_x

    @cached_property
    def cost(self) -> float:
        return losses.cost(self.loss, self.x, self.y, self.data.n_samples)

    @cached_property
    def factors(self) -> linalg.SvdFactors:
        return linalg.svd(self.d)

    @property
    def rank(self) -> int:
        return self.factors.numerical_rank

    @property
    def range_basis(self) -> np.ndarray:
        return self.factors.range_basis

    def range_projector(self) -> np.ndarray:
        b = self.range_basis
        return b @ b.T

    def adapted_direction(self, g: np.ndarray) -> np.ndarray:
        """``(D^T D)^+ g`` via the SVD of ``D``."""
        f = self.factors
        r = f.numerical_rank
        vr = f.v[:, :r]
        return vr @ ((vr.T @ g) / f.singular_values[:r] ** 2)

    def pinv_apply(self, w: np.ndarray) -> np.ndarray:
        """``D^+ w`` via the SVD of ``D``."""
        f = self.factors
        r = f.numerical_rank
        return f.v[:, :r] @ ((f.u[:, :r].T @ w) / f.singular_values[:r])

    def field(self, alpha: float) -> np.ndarray:
        g = self.grad_theta
        if alpha == 0.0:
            return -g
        return -(alpha * self.adapted_direction(g) + (1.0 - alpha) * g)


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    return alpha


def param_field(spec: ModelSpec, theta, data: Dataset, loss: str, alpha: float) -> np.ndarray:
    return State(spec, theta, data, loss).field(_check_alpha(alpha))


@dataclass(frozen=True)
class OutputFieldSample:
    predicted_velocity: np.ndarray
    observed_velocity: np.ndarray
    residual_norm: float

    def passes(self, rtol: float = 1e-8) -> bool:
        return self.residual_norm <= rtol * max(1.0, float(np.linalg.norm(self.predicted_velocity)))


def induced_output_field(spec: ModelSpec, theta, data: Dataset, loss: str, alpha: float) -> OutputFieldSample:
    """Compare ``D V(theta, alpha)`` with ``-(alpha I + (1-alpha) D D^T) P grad_x C``."""
    alpha = _check_alpha(alpha)
    st = State(spec, theta, data, loss)
    observed = st.d @ st.field(alpha)
    b = st.range_basis
    projected = b @ (b.T @ st.grad_x)
    predicted = -(alpha * projected + (1.0 - alpha) * (st.d @ (st.d.T @ projected)))
    return OutputFieldSample(predicted, observed, float(np.linalg.norm(predicted - observed)))


# -- integration -----------------------------------------------------------------

@dataclass(frozen=True)
class FlowConfig:
    alpha: float = 1.0
    step_size: float = 1e-3
    max_time: float = 1.0
    stop_grad_norm: float = 0.0
    integrator: str = "rk4"
    record_stride: int = 1

    def __post_init__(self):
        _check_alpha(self.alpha)
        if not self.step_size > 0:
            raise ValueError(f"step_size must be > 0, got {self.step_size}")
        if not self.max_time >= 0:
            raise ValueError(f"max_time must be >= 0, got {self.max_time}")
        if not self.stop_grad_norm >= 0:
            raise ValueError(f"stop_grad_norm must be >= 0, got {self.stop_grad_norm}")
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"integrator must be one of {INTEGRATORS}, got {self.integrator!r}")
        if int(self.record_stride) < 1:
            raise ValueError(f"record_stride must be >= 1, got {self.record_stride}")


@dataclass(frozen=True)
class TrajectoryRecord:
    s: float
    theta: np.ndarray
    x_flat: np.ndarray
    cost: float
    grad_theta_norm: float
    jacobian_rank: int


@dataclass
class Trajectory:
    records: list = field(default_factory=list)
    diverged: bool = False
    stop_reason: str = ""

    @property
    def times(self) -> np.ndarray:
        return np.array([r.s for r in self.records])

    @property
    def outputs(self) -> np.ndarray:
        return np.array([r.x_flat for r in self.records])

    @property
    def costs(self) -> np.ndarray:
        return np.array([r.cost for r in self.records])

    @property
    def final(self) -> TrajectoryRecord:
        return self.records[-1]


def _record(s: float, st: State) -> TrajectoryRecord:
    return TrajectoryRecord(s=s, theta=st.theta.copy(), x_flat=st.x.copy(), cost=st.cost,
                            grad_theta_norm=float(np.linalg.norm(st.grad_theta)), jacobian_rank=st.rank)


def step(rhs: Callable, t: float, y: np.ndarray, h: float, method: str = "rk4",
         k1: Optional[np.ndarray] = None) -> np.ndarray:
    """One explicit step of ``y' = rhs(t, y)``; ``k1`` may be passed if already known."""
    if k1 is None:
        k1 = rhs(t, y)
    if method == "euler":
        return y + h * k1
    k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = rhs(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(spec: ModelSpec, theta0, data: Dataset, loss: str, config: FlowConfig) -> Trajectory:
    """Fixed-step integration of ``theta' = V(theta, alpha)``.

    Stops at ``max_time``, or as soon as ``|grad_theta C| <= stop_grad_norm``.
    A non-finite state truncates the run and sets ``diverged``; the last finite
    point is kept as the final record.
    """
    alpha = config.alpha
    h = config.step_size
    n_steps = int(np.ceil(config.max_time / h - 1e-9))

    def rhs(_s, th):
        return State(spec, th, data, loss).field(alpha)

    st = State(spec, np.array(theta0, dtype=np.float64), data, loss)
    traj = Trajectory(records=[_record(0.0, st)])
    k, s_now = 0, 0.0
    while True:
        if np.linalg.norm(st.grad_theta) <= config.stop_grad_norm:
            traj.stop_reason = "grad_norm"
            break
        if k >= n_steps:
            traj.stop_reason = "max_time"
            break
        s_next = min((k + 1) * h, config.max_time)
        with np.errstate(all="ignore"):
            try:
                theta = step(rhs, s_now, st.theta, s_next - s_now, config.integrator, k1=st.field(alpha))
                nxt = State(spec, theta, data, loss) if np.all(np.isfinite(theta)) else None
                finite = nxt is not None and np.isfinite(nxt.cost) and np.all(np.isfinite(nxt.grad_theta))
            except (np.linalg.LinAlgError, ValueError):
                finite = False
        if not finite:
            traj.diverged = True
            traj.stop_reason = "diverged"
            break
        k, s_now, st = k + 1, s_next, nxt
        if k % config.record_stride == 0:
            traj.records.append(_record(s_now, st))
    if traj.records[-1].s != s_now:
        traj.records.append(_record(s_now, st))
    return traj


@dataclass(frozen=True)
class SweepReport:
    alphas: tuple
    field_norms: tuple
    tolerance: float

    @property
    def all_below(self) -> bool:
        return all(n <= self.tolerance for n in self.field_norms)

    @property
    def none_below(self) -> bool:
        return all(n > self.tolerance for n in self.field_norms)

    @property
    def consistent(self) -> bool:
        """Either every field vanishes (to tolerance) or none does."""
        return self.all_below or self.none_below


def equilibrium_sweep(spec: ModelSpec, theta_star, data: Dataset, loss: str,
                      alphas: Sequence[float], tolerance: float) -> SweepReport:
    st = State(spec, theta_star, data, loss)
    norms = tuple(float(np.linalg.norm(st.field(_check_alpha(a)))) for a in alphas)
    return SweepReport(alphas=tuple(float(a) for a in alphas), field_norms=norms, tolerance=float(tolerance))


# -- serialization -----------------------------------------------------------------

def fmt(v: float) -> str:
    """Shortest round-tripping decimal form of a float (Python ``repr``)."""
    return repr(float(v))


def write_trajectory_csv(traj: Trajectory, path, theta_path=None) -> None:
    """Write ``s,cost,grad_norm,rank,x_0..x_{QN-1}``; optionally ``s,theta_0..`` alongside."""
    path = Path(path)
    qn = traj.records[0].x_flat.size
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["s", "cost", "grad_norm", "rank"] + [f"x_{i}" for i in range(qn)])
        for r in traj.records:
            w.writerow([fmt(r.s), fmt(r.cost), fmt(r.grad_theta_norm), str(r.jacobian_rank)]
                       + [fmt(v) for v in r.x_flat])
    if theta_path is not None:
        k = traj.records[0].theta.size
        with Path(theta_path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["s"] + [f"theta_{i}" for i in range(k)])
            for r in traj.records:
                w.writerow([fmt(r.s)] + [fmt(v) for v in r.theta])


def read_trajectory_csv(path) -> dict:
    """Parse a trajectory CSV into numpy columns (``s``, ``cost``, ``grad_norm``, ``rank``, ``x``)."""
    with Path(path).open() as fh:
        rows = list(csv.reader(fh))
    body = np.array([[float(v) for v in row] for row in rows[1:]])
    return {"s": body[:, 0], "cost": body[:, 1], "grad_norm": body[:, 2],
            "rank": body[:, 3].astype(int), "x": body[:, 4:]}
