import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from flowlab import losses


def logits(q_min=2, q_max=6, bound=10.0):
    return st.integers(q_min, q_max).flatmap(
        lambda q: arrays(np.float64, q, elements=st.floats(-bound, bound)))


def test_cost_examples():
    assert losses.cost("squared", [1.0, 2.0], [1.0, 2.0], 1) == 0.0
    assert losses.cost("squared", [1.0, 0.0], [0.0, 0.0], 1) == 0.5
    assert losses.cost("cross_entropy", [0.0, 0.0], [0.5, 0.5], 1) == pytest.approx(np.log(2))


def test_squared_cost_divides_by_n():
    assert losses.cost("squared", [1.0, 0.0, 1.0, 0.0], np.zeros(4), 2) == pytest.approx(0.5)


def test_grad_examples():
    assert not losses.grad_x("squared", [1.0, 2.0], [1.0, 2.0], 1).any()
    assert not losses.grad_x("cross_entropy", [0.0, 0.0], [0.5, 0.5], 1).any()
    g = losses.grad_x("cross_entropy", [1.0, -1.0], [0.75, 0.25], 1)
    np.testing.assert_allclose(g, [0.13079707, -0.13079707], atol=1e-8)


def test_ce_rejects_non_simplex_labels():
    with pytest.raises(ValueError):
        losses.cost("cross_entropy", [0.0, 0.0], [0.5, 0.6], 1)
    with pytest.raises(ValueError):
        losses.grad_x("cross_entropy", [0.0, 0.0], [1.2, -0.2], 1)


def test_unknown_loss():
    with pytest.raises(ValueError):
        losses.cost("hinge", [0.0], [0.0], 1)


@pytest.mark.parametrize("kind", ["squared", "cross_entropy"])
def test_grad_matches_finite_differences(kind):
    rng = np.random.default_rng(3)
    n, q = 3, 4
    x = rng.normal(size=n * q)
    y = rng.dirichlet(np.ones(q), size=n).reshape(-1)
    g = losses.grad_x(kind, x, y, n)
    h = 1e-6
    fd = np.array([(losses.cost(kind, x + h * e, y, n) - losses.cost(kind, x - h * e, y, n)) / (2 * h)
                   for e in np.eye(x.size)])
    np.testing.assert_allclose(g, fd, rtol=1e-7, atol=1e-10)


def test_softmax_is_shift_invariant_and_stable():
    s = losses.softmax(np.array([1000.0, 1000.0]))
    np.testing.assert_allclose(s, [0.5, 0.5])
    np.testing.assert_allclose(losses.log_softmax(np.array([0.0, 0.0])), np.log([0.5, 0.5]))


def test_hessian_examples():
    np.testing.assert_allclose(losses.ce_hessian_block([0.0, 0.0]).matrix, [[0.25, -0.25], [-0.25, 0.25]])
    h3 = losses.ce_hessian_block([0.0, 0.0, 0.0]).matrix
    np.testing.assert_allclose(h3, np.eye(3) / 3 - np.ones((3, 3)) / 9, atol=1e-16)
    assert np.linalg.matrix_rank(h3) == 2
    np.testing.assert_allclose(np.linalg.eigvalsh(losses.ce_hessian_block([0.0, 0.0]).matrix), [0.0, 0.5],
                               atol=1e-16)


def test_hessian_matches_fd_of_gradient():
    z = np.array([0.3, -1.2, 2.0])
    y = np.array([0.2, 0.5, 0.3])
    h = 1e-6
    fd = np.array([(losses.grad_x("cross_entropy", z + h * e, y, 1)
                     - losses.grad_x("cross_entropy", z - h * e, y, 1)) / (2 * h) for e in np.eye(3)])
    np.testing.assert_allclose(losses.ce_hessian_block(z).matrix, fd, atol=1e-9)


def test_rank_check_examples():
    c = losses.ce_hessian_rank_psd_check([0.0, 0.0])
    assert c.rank == 1 and c.min_eigenvalue == pytest.approx(0.0, abs=1e-16) and c.psd
    c = losses.ce_hessian_rank_psd_check(np.random.default_rng(1).uniform(-3, 3, 5))
    assert c.rank == 4 and c.psd


def test_extreme_logits_may_collapse_but_is_flagged():
    c = losses.ce_hessian_rank_psd_check([50.0, -50.0])
    assert c.rank in (0, 1)
    assert c.collapsed == (c.rank < 1)


def test_sum_free_basis():
    b = losses.sum_free_basis(4)
    np.testing.assert_allclose(b.T @ b, np.eye(3), atol=1e-15)
    np.testing.assert_allclose(b.T @ np.ones(4), 0.0, atol=1e-15)


@given(logits())
def test_hessian_psd_with_null_vector(z):
    h = losses.ce_hessian_block(z).matrix
    q = z.size
    assert np.linalg.norm(h @ np.ones(q)) <= 1e-12
    assert np.linalg.eigvalsh(h)[0] >= -1e-10
    np.testing.assert_array_equal(h, h.T)


@given(logits(bound=5.0))
def test_hessian_rank_is_q_minus_one(z):
    c = losses.ce_hessian_rank_psd_check(z)
    assert c.rank == z.size - 1
    assert c.restricted_min_eigenvalue > 0


@given(logits(), st.floats(-50, 50))
def test_ce_gradient_is_sum_free_and_shift_invariant(z, c):
    y = np.full(z.size, 1.0 / z.size)
    g = losses.grad_x("cross_entropy", z, y, 1)
    assert abs(g.sum()) <= 1e-14
    np.testing.assert_allclose(losses.grad_x("cross_entropy", z + c, y, 1), g, atol=1e-12)
