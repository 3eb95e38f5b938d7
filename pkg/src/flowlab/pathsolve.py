"""Training along a prescribed output-space path: ``theta' = D^+ xhat'(s)``."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .flows import State, step
from .models import Dataset, ModelSpec, label_flatten, output_flatten

PATH_KINDS = ("linear_interpolation", "user_waypoints")


@dataclass(frozen=True)
class PrescribedPath:
    kind: str
    endpoint_time: float
    position: Callable[[float], np.ndarray]
    velocity: Callable[[float], np.ndarray]


def linear_path(x0, y, endpoint_time: float = 1.0) -> PrescribedPath:
    """``xhat(s) = x0 + (s/T)(y - x0)``, constant velocity ``-(x0 - y)/T``."""
    x0 = np.asarray(x0, dtype=np.float64).copy()
    y = np.asarray(y, dtype=np.float64).copy()
    T = float(endpoint_time)
    if not T > 0:
        raise ValueError(f"endpoint_time must be > 0, got {T}")
    vel = (y - x0) / T
    return PrescribedPath("linear_interpolation", T,
                          position=lambda s: x0 + s * vel,
                          velocity=lambda s: vel)


def waypoint_path(times, points) -> PrescribedPath:
    """Piecewise-linear path through ``(s_i, x_i)``; velocity is the segment slope.

    At a waypoint the slope of the segment starting there is used (the last
    segment's slope at the final time).
    """
    s = np.asarray(times, dtype=np.float64)
    x = np.asarray(points, dtype=np.float64)
    if s.ndim != 1 or len(s) < 2 or x.shape[0] != len(s):
        raise ValueError("need at least two waypoints with one time each")
    if np.any(np.diff(s) <= 0):
        raise ValueError("waypoint times must be strictly increasing")
    if s[0] != 0.0:
        raise ValueError(f"first waypoint must be at s=0, got {s[0]}")
    slopes = np.diff(x, axis=0) / np.diff(s)[:, None]

    def seg(t):
        return int(np.clip(np.searchsorted(s, t, side="right") - 1, 0, len(slopes) - 1))

    def position(t):
        i = seg(t)
        return x[i] + (t - s[i]) * slopes[i]

    return PrescribedPath("user_waypoints", float(s[-1]), position=position,
                          velocity=lambda t: slopes[seg(t)])


def load_waypoints(path) -> PrescribedPath:
    """Read a JSON array of ``{"s": float, "x_flat": [...]}`` objects."""
    items = json.loads(Path(path).read_text())
    return waypoint_path([it["s"] for it in items], [it["x_flat"] for it in items])


def save_waypoints(path, times, points) -> None:
    items = [{"s": float(s), "x_flat": [float(v) for v in x]} for s, x in zip(times, points)]
    Path(path).write_text(json.dumps(items, indent=1))


@dataclass(frozen=True)
class PathRecord:
    s: float
    theta: np.ndarray
    x_flat: np.ndarray  # realized x(theta(s))
    x_prescribed: np.ndarray
    tracking_error: float
    defect: float
    rank: int


@dataclass
class RangeDiagnostics:
    """Per-step ``(s, defect, rank)`` rows, kept for every step regardless of record stride."""

    s: list = field(default_factory=list)
    defect: list = field(default_factory=list)
    rank: list = field(default_factory=list)

    def add(self, s: float, defect: float, rank: int) -> None:
        self.s.append(s)
        self.defect.append(defect)
        self.rank.append(rank)


@dataclass
class PathSolveResult:
    records: list = field(default_factory=list)
    diagnostics: RangeDiagnostics = field(default_factory=RangeDiagnostics)
    defect_threshold: float = 1e-6

    @property
    def range_violated(self) -> bool:
        return self.max_defect > self.defect_threshold

    @property
    def max_defect(self) -> float:
        return max(self.diagnostics.defect)

    @property
    def final(self) -> PathRecord:
        return self.records[-1]

    @property
    def thetas(self) -> np.ndarray:
        return np.array([r.theta for r in self.records])


def _defect(st: State, v: np.ndarray) -> float:
    b = st.range_basis
    perp = v - b @ (b.T @ v)
    return float(np.linalg.norm(perp) / max(1.0, float(np.linalg.norm(v))))


def solve_prescribed(spec: ModelSpec, theta0, data: Dataset, path: PrescribedPath,
                     step_size: float, feedback_gain: float = 0.0,
                     defect_threshold: float = 1e-6, record_stride: int = 1,
                     check_start: bool = True) -> PathSolveResult:
    """RK4 on ``theta' = D^+ (xhat'(s) + kappa (xhat(s) - x(theta)))`` over ``[0, T]``.

    With ``feedback_gain`` (kappa) zero this is the open-loop scheme. The range
    defect ``|P_perp xhat'(s)| / max(1, |xhat'(s)|)`` is recorded at every step;
    exceeding ``defect_threshold`` marks the result range-violated but does not
    stop the run.
    """
    if not step_size > 0:
        raise ValueError(f"step_size must be > 0, got {step_size}")
    loss = "squared"  # gradients are not used; any valid loss works for State

    def rhs(s, th):
        st = State(spec, th, data, loss)
        w = path.velocity(s)
        if feedback_gain:
            w = w + feedback_gain * (path.position(s) - st.x)
        return st.pinv_apply(w)

    st = State(spec, np.array(theta0, dtype=np.float64), data, loss)
    if check_start:
        start_gap = np.linalg.norm(st.x - path.position(0.0))
        if start_gap > 1e-9 * max(1.0, np.linalg.norm(st.x)):
            raise ValueError(f"path must start at x(theta0); gap is {start_gap:.3e}")

    def rec(s, st):
        xp = path.position(s)
        return PathRecord(s=s, theta=st.theta.copy(), x_flat=st.x.copy(), x_prescribed=xp,
                          tracking_error=float(np.linalg.norm(st.x - xp)),
                          defect=_defect(st, path.velocity(s)), rank=st.rank)

    res = PathSolveResult(records=[rec(0.0, st)], defect_threshold=defect_threshold)
    res.diagnostics.add(0.0, res.records[0].defect, res.records[0].rank)
    T = path.endpoint_time
    n_steps = int(np.ceil(T / step_size - 1e-9))
    s = 0.0
    for k in range(n_steps):
        s_next = min((k + 1) * step_size, T)
        theta = step(rhs, s, st.theta, s_next - s, "rk4")
        st, s = State(spec, theta, data, loss), s_next
        res.diagnostics.add(s, _defect(st, path.velocity(s)), st.rank)
        if (k + 1) % record_stride == 0 or k + 1 == n_steps:
            res.records.append(rec(s, st))
    return res


def range_condition_probe(spec: ModelSpec, theta, data: Dataset, direction) -> float:
    """``|P_perp direction| / |direction|`` for ``ran(D[theta])``."""
    v = np.asarray(direction, dtype=np.float64)
    nv = float(np.linalg.norm(v))
    if nv == 0.0:
        raise ValueError("direction must be nonzero")
    st = State(spec, theta, data, "squared")
    b = st.range_basis
    return float(np.linalg.norm(v - b @ (b.T @ v)) / nv)


def linear_path_for(spec: ModelSpec, theta0, data: Dataset, endpoint_time: float = 1.0) -> PrescribedPath:
    return linear_path(output_flatten(spec, theta0, data), label_flatten(data), endpoint_time)
