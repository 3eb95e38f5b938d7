"""Adapted squared-loss flow in the time variable ``t = 1 - exp(-s/N)``.

In ``t`` the adapted flow's output path obeys ``x' = -P_t (x - y) / (1 - t)``,
which for full-rank Jacobians is solved by straight-line interpolation from
``x0`` to ``y``. Under rank loss the deviation from that line is recovered by a
Duhamel (variation-of-constants) integral over a linear propagator.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .flows import State, step
from .models import Dataset, ModelSpec, init_params, label_flatten
from . import reference

T_CAP = 1.0 - 1e-3


@dataclass(frozen=True)
class ReparamRecord:
    t: float
    theta: np.ndarray
    x_flat: np.ndarray
    lin_interp_ref: np.ndarray
    deviation_norm: float
    projector_defect: float  # |P_t^perp (x0 - y)|
    projector: np.ndarray
    rank: int


@dataclass
class ReparamTrajectory:
    records: list = field(default_factory=list)
    x0: np.ndarray = None
    y: np.ndarray = None

    @property
    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.records])

    @property
    def outputs(self) -> np.ndarray:
        return np.array([r.x_flat for r in self.records])

    @property
    def projectors(self) -> np.ndarray:
        return np.array([r.projector for r in self.records])

    def measured_deviation(self) -> np.ndarray:
        """``x(t) - ((1 - t) x0 + t y)`` per record."""
        return self.outputs - np.array([r.lin_interp_ref for r in self.records])


def _record(t: float, st: State, x0: np.ndarray, y: np.ndarray) -> ReparamRecord:
    lin = (1.0 - t) * x0 + t * y
    p = st.range_projector()
    return ReparamRecord(t=t, theta=st.theta.copy(), x_flat=st.x.copy(), lin_interp_ref=lin,
                         deviation_norm=float(np.linalg.norm(st.x - lin)),
                         projector_defect=float(np.linalg.norm((x0 - y) - p @ (x0 - y))),
                         projector=p, rank=st.rank)


def reparametrized_flow(spec: ModelSpec, theta0, data: Dataset, step_size: float = 1e-3,
                        t_max: float = 0.99, record_stride: int = 1) -> ReparamTrajectory:
    """Integrate ``d theta/dt = N/(1-t) * V(theta, 1)`` for the squared loss with RK4."""
    if not 0.0 < t_max <= T_CAP:
        raise ValueError(f"t_max must lie in (0, {T_CAP}], got {t_max}")
    if not step_size > 0:
        raise ValueError(f"step_size must be > 0, got {step_size}")
    n = data.n_samples

    def rhs(t, th):
        return (n / (1.0 - t)) * State(spec, th, data, "squared").field(1.0)

    st = State(spec, np.array(theta0, dtype=np.float64), data, "squared")
    x0, y = st.x.copy(), label_flatten(data)
    traj = ReparamTrajectory(records=[_record(0.0, st, x0, y)], x0=x0, y=y)
    n_steps = int(np.ceil(t_max / step_size - 1e-9))
    t = 0.0
    for k in range(n_steps):
        t_next = min((k + 1) * step_size, t_max)
        theta = step(rhs, t, st.theta, t_next - t, "rk4", k1=(n / (1.0 - t)) * st.field(1.0))
        if not np.all(np.isfinite(theta)):
            raise FloatingPointError(f"reparametrized flow diverged at t={t_next}")
        st, t = State(spec, theta, data, "squared"), t_next
        if (k + 1) % record_stride == 0 or k + 1 == n_steps:
            traj.records.append(_record(t, st, x0, y))
    return traj


# -- propagator ----------------------------------------------------------------

@dataclass(frozen=True)
class PropagatorState:
    u: np.ndarray
    t_from: float
    t_to: float


def _generator(p: np.ndarray, kind: str) -> np.ndarray:
    if kind == "complement":
        return np.eye(p.shape[0]) - p
    if kind == "range":
        return p
    raise ValueError(f"generator must be 'complement' or 'range', got {kind!r}")


def _check_grid(times: np.ndarray, projectors: np.ndarray) -> None:
    if len(times) != len(projectors):
        raise ValueError(f"{len(times)} grid times but {len(projectors)} projector samples")
    if np.any(np.diff(times) <= 0):
        raise ValueError("grid times must be strictly increasing")


def advance_propagator(times, projectors, i_from: int, i_to: int,
                       generator: str = "complement") -> PropagatorState:
    """RK4 for ``dU/dt = G_t U / (1 - t)`` from grid index ``i_from`` to ``i_to``, ``U = I`` at start.

    ``G_t`` is ``I - P_t`` (``generator="complement"``) or ``P_t`` (``"range"``);
    the generator at step midpoints is the average of the two endpoint samples.
    """
    times = np.asarray(times, dtype=np.float64)
    projectors = np.asarray(projectors, dtype=np.float64)
    _check_grid(times, projectors)
    gens = np.array([_generator(p, generator) for p in projectors])
    u = np.eye(projectors.shape[1])
    for k in range(i_from, i_to):
        h = times[k + 1] - times[k]
        a = gens[k] / (1.0 - times[k])
        m = 0.5 * (gens[k] + gens[k + 1]) / (1.0 - times[k] - 0.5 * h)
        b = gens[k + 1] / (1.0 - times[k + 1])
        k1 = a @ u
        k2 = m @ (u + 0.5 * h * k1)
        k3 = m @ (u + 0.5 * h * k2)
        k4 = b @ (u + h * k3)
        u = u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return PropagatorState(u=u, t_from=float(times[i_from]), t_to=float(times[i_to]))


def deviation_via_propagator(traj: ReparamTrajectory, projector_samples=None,
                             generator: str = "complement") -> np.ndarray:
    """Predicted ``x(t) - ((1 - t) x0 + t y)`` at every grid time from the Duhamel integral

        int_0^t U(t, t') (1 - t)/(1 - t') P_perp(t') (x0 - y) dt'

    with trapezoidal quadrature on the trajectory grid. ``U(t, t')`` is taken as
    ``Phi(t) Phi(t')^{-1}`` with ``Phi = U(., 0)`` advanced by RK4 along the grid.
    ``generator="complement"`` propagates with ``I - P_t``, the generator that
    the deviation equation actually carries; ``"range"`` uses ``P_t`` instead
    and is kept only for comparison.
    """
    times = traj.times
    projectors = traj.projectors if projector_samples is None else np.asarray(projector_samples, dtype=np.float64)
    _check_grid(times, projectors)
    v = traj.x0 - traj.y
    dim = v.size
    eye = np.eye(dim)
    phi = np.empty((len(times), dim, dim))
    phi[0] = eye
    for k in range(len(times) - 1):
        phi[k + 1] = advance_propagator(times[k:k + 2], projectors[k:k + 2], 0, 1, generator).u @ phi[k]
    # g(t') = Phi(t')^{-1} P_perp(t') v / (1 - t')
    g = np.array([np.linalg.solve(phi[k], (eye - projectors[k]) @ v) / (1.0 - times[k])
                  for k in range(len(times))])
    cum = np.zeros_like(g)
    dt = np.diff(times)[:, None]
    cum[1:] = np.cumsum(0.5 * dt * (g[1:] + g[:-1]), axis=0)
    return np.array([(1.0 - t) * (phi[k] @ cum[k]) for k, t in enumerate(times)])


def build_rank_deficient_case(consistent_labels: bool = False, seed: int = 0):
    """Reference net with a duplicated training input; duplicated rows pin ``rank(D) <= Q(N-1)``."""
    return reference.rank_deficient(seed=seed, consistent_labels=consistent_labels)
