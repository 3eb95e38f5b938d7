import numpy as np
import pytest
from hypothesis import given, strategies as st

from flowlab import analysis, flows
from flowlab.flows import FlowConfig, State
from flowlab.models import Dataset, ModelSpec, init_params, jacobian, output_flatten
from flowlab.reference import REFERENCE_MODELS, tiny_full_rank

ALPHAS = [0.0, 0.25, 0.5, 0.75, 1.0]


def fitted_affine():
    """Affine model whose labels equal its outputs, so grad_x C = 0."""
    spec, theta, data = REFERENCE_MODELS["affine"]()
    x = output_flatten(spec, theta, data).reshape(data.labels.shape)
    return spec, theta, Dataset(data.inputs, x)


def ce_tiny():
    spec, theta, data = tiny_full_rank()
    return spec, theta, Dataset(data.inputs, [[0.3, 0.7], [0.6, 0.4], [0.5, 0.5]], "simplex")


class TestFields:
    def test_alpha_zero_is_plain_gradient(self):
        spec, theta, data = tiny_full_rank()
        st_ = State(spec, theta, data, "squared")
        np.testing.assert_array_equal(flows.param_field(spec, theta, data, "squared", 0.0),
                                      -(st_.d.T @ st_.grad_x))

    def test_adapted_direction_matches_explicit_pinv(self):
        spec, theta, data = REFERENCE_MODELS["rank-deficient"]()
        st_ = State(spec, theta, data, "squared")
        g = st_.grad_theta
        explicit = np.linalg.pinv(st_.d.T @ st_.d, rcond=1e-10, hermitian=True) @ g
        np.testing.assert_allclose(st_.adapted_direction(g), explicit, rtol=1e-6, atol=1e-10)

    @pytest.mark.parametrize("alpha", ALPHAS)
    def test_zero_at_fitted_point(self, alpha):
        spec, theta, data = fitted_affine()
        assert np.linalg.norm(flows.param_field(spec, theta, data, "squared", alpha)) <= 1e-14

    def test_alpha_out_of_range(self):
        spec, theta, data = tiny_full_rank()
        with pytest.raises(ValueError, match="alpha"):
            flows.param_field(spec, theta, data, "squared", 1.5)

    def test_induced_field_special_cases(self):
        spec, theta, data = tiny_full_rank()
        st_ = State(spec, theta, data, "squared")
        s0 = flows.induced_output_field(spec, theta, data, "squared", 0.0)
        np.testing.assert_allclose(s0.predicted_velocity, -st_.d @ st_.d.T @ st_.grad_x, atol=1e-13)
        s1 = flows.induced_output_field(spec, theta, data, "squared", 1.0)
        np.testing.assert_allclose(s1.predicted_velocity, -st_.grad_x, atol=1e-13)

    @pytest.mark.parametrize("name", ["tiny-full-rank", "rank-deficient"])
    @pytest.mark.parametrize("loss", ["squared", "cross_entropy"])
    def test_induced_field_identity(self, name, loss):
        spec, _, data = REFERENCE_MODELS[name]()
        if loss == "cross_entropy":
            y = np.random.default_rng(0).dirichlet([1.0, 1.0], size=data.n_samples)
            data = Dataset(data.inputs, y, "simplex")
        for seed in range(5):
            theta = init_params(spec, seed)
            for a in ALPHAS:
                assert flows.induced_output_field(spec, theta, data, loss, a).passes(1e-8)

    @given(st.floats(0, 1), st.integers(0, 10**6))
    def test_induced_identity_any_alpha(self, alpha, seed):
        spec, _, data = tiny_full_rank()
        assert flows.induced_output_field(spec, init_params(spec, seed), data, "squared", alpha).passes(1e-8)


class TestIntegrate:
    def test_equilibrium_start_is_constant(self):
        spec, theta, data = fitted_affine()
        for a in (0.0, 1.0):
            traj = flows.integrate(spec, theta, data, "squared", FlowConfig(alpha=a, step_size=0.1, max_time=1.0))
            for r in traj.records:
                np.testing.assert_allclose(r.theta, theta, atol=1e-15)

    def test_stop_on_gradient_norm(self):
        spec, theta, data = fitted_affine()
        traj = flows.integrate(spec, theta, data, "squared", FlowConfig(stop_grad_norm=1e-10, max_time=5.0))
        assert traj.stop_reason == "grad_norm"
        assert len(traj.records) == 1

    @pytest.mark.parametrize("alpha", [0.0, 0.5, 1.0])
    def test_cost_decreases(self, alpha):
        spec, theta, data = tiny_full_rank()
        traj = flows.integrate(spec, theta, data, "squared",
                               FlowConfig(alpha=alpha, step_size=0.02, max_time=2.0, record_stride=5))
        assert np.all(np.diff(traj.costs) <= 1e-15)
        assert traj.stop_reason == "max_time"
        assert traj.final.s == pytest.approx(2.0)

    def test_time_grid_is_exact_multiples(self):
        spec, theta, data = tiny_full_rank()
        traj = flows.integrate(spec, theta, data, "squared", FlowConfig(step_size=0.3, max_time=1.0))
        assert traj.times.tolist() == [0.0, 0.3, 0.6, 0.8999999999999999, 1.0]

    def test_divergence_is_flagged(self):
        spec, theta, data = REFERENCE_MODELS["affine"]()
        cfg = FlowConfig(alpha=0.0, step_size=1e3, max_time=1e6, integrator="euler")
        traj = flows.integrate(spec, theta, data, "squared", cfg)
        assert traj.diverged and traj.stop_reason == "diverged"
        assert np.all(np.isfinite(traj.final.theta))

    def test_rk4_order(self):
        spec, theta, data = tiny_full_rank()
        ends = [flows.integrate(spec, theta, data, "squared", FlowConfig(alpha=0.5, step_size=h, max_time=0.8)
                                ).final.theta for h in (0.2, 0.1, 0.05)]
        e1, e2 = np.linalg.norm(ends[0] - ends[2]), np.linalg.norm(ends[1] - ends[2])
        assert e1 / e2 > 12

    @pytest.mark.parametrize("bad", [dict(step_size=0.0), dict(max_time=-1.0), dict(integrator="rk45"),
                                     dict(record_stride=0), dict(alpha=-0.1)])
    def test_config_validation(self, bad):
        with pytest.raises(ValueError):
            FlowConfig(**bad)


class TestSweep:
    def test_zero_gradient_point(self):
        spec, theta, data = fitted_affine()
        rep = flows.equilibrium_sweep(spec, theta, data, "squared", ALPHAS, 1e-12)
        assert rep.all_below and rep.consistent

    def test_converged_endpoint(self):
        spec, theta, data = tiny_full_rank()
        traj = flows.integrate(spec, theta, data, "squared",
                               FlowConfig(alpha=0.0, step_size=0.05, max_time=2000.0, stop_grad_norm=1e-8,
                                          record_stride=100))
        assert traj.stop_reason == "grad_norm"
        rep = flows.equilibrium_sweep(spec, traj.final.theta, data, "squared", ALPHAS, 1e-7)
        assert rep.all_below

    def test_no_spurious_zeros(self):
        spec, theta, data = tiny_full_rank()
        rep = flows.equilibrium_sweep(spec, theta, data, "squared", ALPHAS, 1e-7)
        assert rep.none_below and rep.consistent


class TestCsv:
    def test_round_trip_and_byte_stability(self, tmp_path):
        spec, theta, data = tiny_full_rank()
        traj = flows.integrate(spec, theta, data, "squared", FlowConfig(step_size=0.1, max_time=0.5))
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        flows.write_trajectory_csv(traj, a, tmp_path / "theta.csv")
        flows.write_trajectory_csv(traj, b)
        assert a.read_bytes() == b.read_bytes()
        back = flows.read_trajectory_csv(a)
        np.testing.assert_array_equal(back["x"], traj.outputs)
        np.testing.assert_array_equal(back["cost"], traj.costs)
        assert a.read_text().splitlines()[0].startswith("s,cost,grad_norm,rank,x_0")
        assert (tmp_path / "theta.csv").read_text().startswith("s,theta_0,")


class TestHyperplaneInvariant:
    def test_adapted_ce_flow_conserves_sums(self):
        spec, theta, data = ce_tiny()
        traj = flows.integrate(spec, theta, data, "cross_entropy", FlowConfig(alpha=1.0, step_size=0.01, max_time=2.0))
        assert analysis.hyperplane_conservation(traj.outputs, 2).max_drift <= 1e-6

    def test_standard_flow_does_not(self):
        spec, theta, data = ce_tiny()
        traj = flows.integrate(spec, theta, data, "cross_entropy", FlowConfig(alpha=0.0, step_size=0.01, max_time=2.0))
        assert analysis.hyperplane_conservation(traj.outputs, 2).max_drift > 1e-3
