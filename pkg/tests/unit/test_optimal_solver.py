import numpy as np
import pytest

from src.dppf.errors import DimensionMismatch, NoConvergence, NonPositiveInput, SingularS
from src.dppf.linalg_core import cholesky
from src.dppf.loss import trace_loss
from src.dppf.models import SolverConfig
from src.dppf.operators import prefix_sum_matrix
from src.dppf.optimal_solver import (
    _distance_to_fixed_point,
    kkt_residual,
    phi,
    rtol_sweep,
    solve,
)

# diag drift and KKT residual certificates hold from this tolerance down
CERTIFICATE_RTOL = 1e-8

TABLE_OPTIMAL = {256: 40.4, 512: 62.0, 1024: 94.6, 2048: 143.6, 4096: 217.3}


def test_identity_is_its_own_optimum():
    result = solve(np.eye(6))
    assert np.allclose(result.lam, 1.0)
    assert np.allclose(result.x_star, np.eye(6))
    assert np.isclose(result.loss, 6.0)
    assert result.iterations == 1


def test_diagonal_operator():
    a = np.array([1.0, 2.0, 3.0])
    result = solve(np.diag(a), SolverConfig(rtol=1e-12))
    assert np.allclose(result.lam, a**2, rtol=1e-9)
    assert np.allclose(result.x_star, np.eye(3), atol=1e-9)
    assert np.isclose(result.loss, np.sum(a**2))


def test_two_by_two_matches_grid_scan():
    result = solve(prefix_sum_matrix(2), SolverConfig(rtol=1e-10))
    # X = [[1, rho], [rho, 1]]  =>  tr(SᵀS X⁻¹) = (3 − 2·rho) / (1 − rho²)
    rho = np.linspace(-0.999999, 0.999999, 2_000_001)
    grid_min = np.min((3 - 2 * rho) / (1 - rho**2))
    assert abs(result.loss - grid_min) / grid_min < 1e-4
    assert result.loss <= grid_min * (1 + 1e-9)


def test_phi_is_homogeneous_of_degree_half():
    s = prefix_sum_matrix(8)
    v = np.random.default_rng(0).uniform(0.5, 2.0, 8)
    assert np.allclose(phi(4.0 * v, s), 2.0 * phi(v, s))


def test_phi_rejects_non_positive_input():
    with pytest.raises(NonPositiveInput):
        phi(np.array([1.0, 0.0]), prefix_sum_matrix(2))


def test_phi_rejects_wrong_length():
    with pytest.raises(DimensionMismatch):
        phi(np.ones(3), prefix_sum_matrix(2))


def test_singular_operator():
    with pytest.raises(SingularS):
        solve(np.array([[1.0, 0.0], [1.0, 0.0]]))


def test_non_square_operator():
    with pytest.raises(DimensionMismatch):
        solve(np.ones((2, 3)))


def test_iteration_cap_reports_last_iterate():
    with pytest.raises(NoConvergence) as info:
        solve(prefix_sum_matrix(32), SolverConfig(rtol=1e-14, max_iter=2))
    assert info.value.iterations == 2
    assert info.value.last_iterate.shape == (32,)
    assert info.value.residual > 1e-14


@pytest.mark.parametrize("rtol", [1e-5, 1e-8])
@pytest.mark.parametrize("n", [4, 16, 64, 256])
def test_random_starts_agree(n, rtol):
    s = prefix_sum_matrix(n)
    reference = solve(s, SolverConfig(rtol=rtol)).lam
    for seed in range(5):
        lam = solve(s, SolverConfig(rtol=rtol, init="random", seed=seed)).lam
        assert np.linalg.norm(lam - reference) / np.linalg.norm(reference) <= 10 * rtol


@pytest.mark.parametrize("n", [4, 16, 64, 256])
def test_kkt_certificate(n):
    s = prefix_sum_matrix(n)
    result = solve(s, SolverConfig(rtol=CERTIFICATE_RTOL))
    assert result.kkt_residual <= 1e-4
    assert result.diag_drift <= 1e-6
    assert np.array_equal(np.diag(result.x_star), np.ones(n))
    assert np.array_equal(result.x_star, result.x_star.T)
    cholesky(result.x_star)
    assert np.isclose(kkt_residual(s, result.x_star, result.lam), result.kkt_residual)


@pytest.mark.parametrize("n", [16, 64, 256])
def test_diag_drift_tracks_tolerance_at_defaults(n, solved):
    result, _ = solved(n)
    assert result.diag_drift <= 10 * SolverConfig().rtol


def test_distance_estimate_stops_slow_contraction():
    # a residual under rtol is not enough while the contraction rate is near one
    assert _distance_to_fixed_point(0.9e-5, 1e-5) > 1e-5
    assert _distance_to_fixed_point(0.5e-5, 1e-5) == pytest.approx(1e-5)
    assert _distance_to_fixed_point(1e-6, float("inf")) == float("inf")
    assert _distance_to_fixed_point(2e-6, 1e-6) == float("inf")
    assert _distance_to_fixed_point(0.0, 1.0) == 0.0


def test_x_star_is_a_local_minimum():
    n = 8
    s = prefix_sum_matrix(n)
    x_star = solve(s, SolverConfig(rtol=1e-10)).x_star
    best = trace_loss(s, x_star)
    rng = np.random.default_rng(12)
    checked = 0
    while checked < 20:
        e = np.triu(rng.standard_normal((n, n)), k=1)
        e = e + e.T
        e *= 1e-3 / np.linalg.norm(e)
        if np.linalg.eigvalsh(x_star + e)[0] <= 0:
            continue
        assert trace_loss(s, x_star + e) >= best - 1e-9
        checked += 1


def test_loss_equals_sum_of_multipliers():
    result = solve(prefix_sum_matrix(32), SolverConfig(rtol=1e-9))
    assert np.isclose(result.loss, result.lam.sum(), rtol=1e-6)


def test_residual_trace_ends_below_tolerance():
    result = solve(prefix_sum_matrix(16), SolverConfig(rtol=1e-6))
    assert len(result.residuals) == result.iterations
    assert result.residuals[-1] == result.fp_residual < 1e-6


def test_kkt_residual_dimension_check():
    with pytest.raises(DimensionMismatch):
        kkt_residual(prefix_sum_matrix(3), np.eye(3), np.ones(2))


def test_rtol_sweep_matches_independent_solves():
    s = prefix_sum_matrix(64)
    points = rtol_sweep(s, [1e-2, 1e-5, 1e-8])
    assert [p.rtol for p in points] == [1e-2, 1e-5, 1e-8]
    assert [p.iterations for p in points] == sorted(p.iterations for p in points)
    direct = solve(s, SolverConfig(rtol=1e-5))
    assert np.isclose(points[1].loss, direct.loss, rtol=1e-12)
    assert points[1].iterations == direct.iterations
    assert abs(points[1].loss - points[2].loss) / points[2].loss <= 1e-3


def test_rtol_plateau_at_1024():
    low, high = rtol_sweep(prefix_sum_matrix(1024), [1e-5, 1e-8])
    assert abs(low.loss - high.loss) / high.loss <= 1e-3
    assert low.loss >= high.loss * (1 - 1e-12)


@pytest.mark.slow
def test_rtol_plateau_at_2048():
    low, high = rtol_sweep(prefix_sum_matrix(2048), [1e-5, 1e-8])
    assert abs(low.loss - high.loss) / high.loss <= 1e-3


def test_rtol_sweep_single_tolerance():
    assert len(rtol_sweep(prefix_sum_matrix(4), [1e-6])) == 1


@pytest.mark.parametrize("n", [256, 512, 1024])
def test_table_optimal_column(n, solved):
    result, _ = solved(n)
    assert abs(result.root_loss - TABLE_OPTIMAL[n]) / TABLE_OPTIMAL[n] <= 0.005


@pytest.mark.slow
@pytest.mark.parametrize("n", [2048, 4096])
def test_table_optimal_column_large(n, solved):
    result, _ = solved(n)
    assert abs(result.root_loss - TABLE_OPTIMAL[n]) / TABLE_OPTIMAL[n] <= 0.005
