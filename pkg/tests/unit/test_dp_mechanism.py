import math
from itertools import product

import numpy as np
import pytest
from pydantic import ValidationError

from src.dppf.dp_mechanism import (
    calibrate_sigma,
    candidate_count,
    check_quadratic_form,
    estimate_errors,
    generalized_sensitivity,
    rdp_epsilon,
    run_mechanism,
    tree_equivalent_sigma,
)
from src.dppf.errors import (
    DimensionMismatch,
    InputOutOfRange,
    InvalidPrivacyParams,
    NotSymmetric,
    TooLargeForBruteForce,
)
from src.dppf.linalg_core import max_column_norm
from src.dppf.models import AdjacencySet, PrivacyParams
from src.dppf.operators import is_streaming_pair, prefix_sum_matrix
from src.dppf.tree_baselines import honaker_full


def _priv(fact, zeta=1.0):
    return PrivacyParams(epsilon=1.0, delta=1e-6, zeta=zeta, gamma=max_column_norm(fact.h))


# ---------------------------------------------------------------------------
# Calibration
# ---------------------------------------------------------------------------


def test_calibrate_sigma():
    assert math.isclose(calibrate_sigma(1.0, 1.0, 1.0, math.exp(-4)), 4.0)
    assert math.isclose(calibrate_sigma(2.0, 0.5, 2.0, math.exp(-1)), 1.0)


@pytest.mark.parametrize(
    "args", [(0.0, 1.0, 1.0, 0.1), (1.0, -1.0, 1.0, 0.1), (1.0, 1.0, 0.0, 0.1), (1.0, 1.0, 1.0, 1.0)]
)
def test_calibrate_sigma_rejects_bad_params(args):
    with pytest.raises(InvalidPrivacyParams):
        calibrate_sigma(*args)


def test_privacy_params_derive_sigma():
    priv = PrivacyParams(epsilon=1.0, delta=math.exp(-4), zeta=1.0, gamma=1.0)
    assert math.isclose(priv.sigma, 4.0)
    assert "sigma" in priv.model_dump()


def test_rdp_epsilon():
    assert rdp_epsilon(2.0, 1.0, 1.0) == 1.0
    with pytest.raises(InvalidPrivacyParams):
        rdp_epsilon(1.0, 1.0, 1.0)


def test_tree_equivalent_sigma():
    assert math.isclose(tree_equivalent_sigma(1.0, 1.0, 7), 1 / math.sqrt(3))
    assert math.isclose(tree_equivalent_sigma(1.0, 1.0, 4096), 1 / math.sqrt(13))
    assert math.isclose(tree_equivalent_sigma(2.0, 3.0, 1), 6.0)


# ---------------------------------------------------------------------------
# Mechanism runs
# ---------------------------------------------------------------------------


def test_zero_noise_returns_exact_prefix_sums(solved):
    _, fact = solved(16)
    x = np.random.default_rng(0).uniform(-1, 1, 16)
    run = run_mechanism(fact.w, fact.h, x, _priv(fact), seed=0, noise=np.zeros(16))
    assert np.allclose(run.releases, np.cumsum(x), atol=1e-9)


def test_error_is_exactly_the_decoded_noise(solved):
    _, fact = solved(16)
    x = np.random.default_rng(1).uniform(-1, 1, 16)
    run = run_mechanism(fact.w, fact.h, x, _priv(fact), seed=5)
    assert np.allclose(run.releases - run.true_prefix, fact.w @ run.noise_used, atol=1e-9)
    assert np.allclose(run.noise_component, fact.w @ run.noise_used)


def test_fixed_seed_is_bitwise_reproducible(solved):
    _, fact = solved(16)
    x = np.zeros(16)
    first = run_mechanism(fact.w, fact.h, x, _priv(fact), seed=42)
    second = run_mechanism(fact.w, fact.h, x, _priv(fact), seed=42)
    other = run_mechanism(fact.w, fact.h, x, _priv(fact), seed=43)
    assert np.array_equal(first.releases, second.releases)
    assert not np.array_equal(first.releases, other.releases)


def test_non_streaming_pair_releases_in_batch():
    tree = honaker_full(3)
    assert not is_streaming_pair(tree.w, tree.h)
    x = np.ones(4)
    priv = PrivacyParams(epsilon=1.0, delta=1e-6, zeta=1.0, gamma=math.sqrt(3))
    run = run_mechanism(tree.w, tree.h, x, priv, seed=0, noise=np.zeros(7))
    assert np.allclose(run.releases, [1, 2, 3, 4])


def test_input_out_of_range(solved):
    _, fact = solved(4)
    with pytest.raises(InputOutOfRange):
        run_mechanism(fact.w, fact.h, np.array([0, 1.1, 0, 0]), _priv(fact), seed=0)


def test_input_length_mismatch(solved):
    _, fact = solved(4)
    with pytest.raises(DimensionMismatch):
        run_mechanism(fact.w, fact.h, np.zeros(5), _priv(fact), seed=0)


def test_monte_carlo_total_error(solved):
    _, fact = solved(64)
    sigma = 0.7
    report = estimate_errors(fact.w, sigma, replicates=100_000, seed=11)
    expected = sigma**2 * np.sum(fact.w**2)
    assert abs(report.mean_total_sq_error - expected) / expected <= 0.03
    assert report.per_step_variance.shape == (64,)


def test_monte_carlo_per_step_variance(solved):
    _, fact = solved(64)
    sigma = 0.7
    report = estimate_errors(fact.w, sigma, replicates=100_000, seed=12)
    expected = sigma**2 * np.sum(fact.w**2, axis=1)
    assert np.all(np.abs(report.per_step_variance - expected) / expected <= 0.03)


# ---------------------------------------------------------------------------
# Sensitivity
# ---------------------------------------------------------------------------


def test_singleton_sensitivity_is_max_column_norm():
    h = np.random.default_rng(2).standard_normal((7, 5))
    adj = AdjacencySet.singletons(5, zeta=0.3)
    assert generalized_sensitivity(h, adj) == 0.3 * max_column_norm(h)


def test_k_participations_on_prefix_sums():
    s = prefix_sum_matrix(4)
    brute = max(
        np.linalg.norm(s @ np.array(delta))
        for delta in product((-1.0, 0.0, 1.0), repeat=4)
        if 0 < np.count_nonzero(delta) <= 2
    )
    sensitivity = generalized_sensitivity(s, AdjacencySet.k_participations(4, k=2))
    assert math.isclose(sensitivity, brute)
    # the first two columns sum to (1, 2, 2, 2)
    assert math.isclose(sensitivity, math.sqrt(13))


def test_k_participations_on_identity():
    adj = AdjacencySet.k_participations(6, k=3, zeta=0.5)
    assert math.isclose(generalized_sensitivity(np.eye(6), adj), math.sqrt(3) * 0.5)


def test_candidate_counts():
    assert candidate_count(AdjacencySet.singletons(5)) == 10
    assert candidate_count(AdjacencySet.k_participations(4, k=2)) == 4 * 2 + 6 * 4
    assert candidate_count(AdjacencySet.min_gap(5, tau=1)) == 3**5 - 1
    assert candidate_count(AdjacencySet.min_gap(3, tau=2)) == 2 * 3 + 4
    assert candidate_count(AdjacencySet.fixed_windows(4, window=2)) == 5 * 5 - 1


def test_min_gap_matches_k_participations_when_unconstrained():
    h = np.random.default_rng(3).standard_normal((6, 6))
    all_subsets = generalized_sensitivity(h, AdjacencySet.min_gap(6, tau=1))
    assert math.isclose(all_subsets, generalized_sensitivity(h, AdjacencySet.k_participations(6, k=6)))


def test_too_large_for_brute_force():
    with pytest.raises(TooLargeForBruteForce):
        generalized_sensitivity(np.eye(24), AdjacencySet.k_participations(24, k=24))


def test_sensitivity_grows_with_the_delta_set():
    rng = np.random.default_rng(4)
    for _ in range(20):
        n = int(rng.integers(2, 13))
        h = rng.standard_normal((n + 2, n))
        deltas = rng.uniform(-1, 1, (6, n)).tolist()
        small = AdjacencySet.explicit(deltas[:3])
        large = AdjacencySet.explicit(deltas)
        assert generalized_sensitivity(h, small) <= generalized_sensitivity(h, large)
        k = int(rng.integers(1, min(n, 4) + 1))
        assert generalized_sensitivity(
            h, AdjacencySet.k_participations(n, k=k)
        ) <= generalized_sensitivity(h, AdjacencySet.k_participations(n, k=k + 1)) + 1e-12


def test_fixed_windows_sensitivity_bounds():
    h = np.random.default_rng(5).standard_normal((8, 6))
    single = generalized_sensitivity(h, AdjacencySet.singletons(6))
    windows = generalized_sensitivity(h, AdjacencySet.fixed_windows(6, window=2))
    everything = generalized_sensitivity(h, AdjacencySet.k_participations(6, k=6))
    assert single <= windows <= everything + 1e-12


def test_quadratic_form_check(solved):
    result, _ = solved(8)
    assert check_quadratic_form(result.x_star, AdjacencySet.singletons(8))
    assert not check_quadratic_form(2 * np.eye(4), AdjacencySet.singletons(4))
    assert check_quadratic_form(np.eye(4) / 2, AdjacencySet.k_participations(4, k=2))
    assert not check_quadratic_form(np.eye(4) / 2, AdjacencySet.k_participations(4, k=3))


def test_singleton_optimum_fails_under_two_participations(solved):
    result, _ = solved(8)
    assert not check_quadratic_form(result.x_star, AdjacencySet.k_participations(8, k=2))


def test_quadratic_form_requires_symmetry():
    x = np.eye(4)
    x[0, 1] = 0.5
    with pytest.raises(NotSymmetric):
        check_quadratic_form(x, AdjacencySet.singletons(4))


def test_adjacency_needs_its_parameter():
    with pytest.raises(ValidationError):
        AdjacencySet(kind="k_participations", n=4)


def test_explicit_deltas_are_bounded_by_zeta():
    with pytest.raises(ValidationError):
        AdjacencySet.explicit([[2.0, 0.0]], zeta=1.0)
