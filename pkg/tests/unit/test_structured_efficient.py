import numpy as np
import pytest

from src.dppf.errors import DimensionMismatch, StreamExhausted
from src.dppf.models import AlsConfig, StructuredW
from src.dppf.operators import is_streaming_pair, prefix_sum_matrix
from src.dppf.structured_efficient import (
    als_fit,
    assemble,
    band_split,
    efficient_loss,
    fit_structured,
    init_noise_stream,
    noise_stream_step,
    stream_noise,
    structured_factorization,
)

TABLE_EFFICIENT = {256: 40.4, 512: 62.2, 1024: 95.5, 2048: 145.8, 4096: 224.0}
TABLE_DR = {256: (4, 4), 512: (5, 4), 1024: (5, 5), 2048: (6, 5), 4096: (6, 6)}


def _random_structured(rng, n, d, r):
    offsets = np.subtract.outer(np.arange(n), np.arange(n))
    band = np.where((offsets >= 0) & (offsets < d), rng.standard_normal((n, n)), 0.0)
    return StructuredW(
        n=n,
        d=d,
        r=r,
        band=band,
        a=rng.standard_normal((n, r)),
        b=rng.standard_normal((n, r)),
    )


def test_band_split_reconstructs_w():
    w = np.tril(np.random.default_rng(0).standard_normal((9, 9)))
    band, mask = band_split(w, 3)
    assert np.array_equal(band + mask * w, w)
    offsets = np.subtract.outer(np.arange(9), np.arange(9))
    assert not np.any(band[(offsets >= 3) | (offsets < 0)])
    assert not np.any(mask[offsets < 3])


def test_band_split_extremes():
    w = np.tril(np.ones((4, 4)))
    band, mask = band_split(w, 0)
    assert not band.any()
    assert np.array_equal(mask, w)
    band, mask = band_split(w, 4)
    assert np.array_equal(band, w)
    assert not mask.any()


def test_assemble_without_low_rank_part_is_the_band():
    rng = np.random.default_rng(1)
    sw = _random_structured(rng, 6, 2, 2).model_copy(update={"a": np.zeros((6, 2))})
    assert np.array_equal(assemble(sw), sw.band)


def test_assemble_full_band_returns_w():
    w = np.tril(np.random.default_rng(2).standard_normal((5, 5)))
    band, _ = band_split(w, 5)
    sw = StructuredW(n=5, d=5, r=1, band=band, a=np.ones((5, 1)), b=np.ones((5, 1)))
    assert np.array_equal(assemble(sw), w)


def test_als_recovers_exact_low_rank_part():
    rng = np.random.default_rng(3)
    n, d, r = 30, 2, 2
    low_rank = rng.standard_normal((n, r)) @ rng.standard_normal((n, r)).T
    w = np.tril(low_rank, -d) + np.diag(np.ones(n))
    _, mask = band_split(w, d)
    fit = als_fit(w, mask, r, AlsConfig(reg=1e-10, sweeps=100))
    assert fit.objective[-1] < 1e-4 * np.sum((mask * w) ** 2)


def test_als_objective_never_increases(solved):
    _, fact = solved(64)
    _, mask = band_split(fact.w, 3)
    objective = als_fit(fact.w, mask, 3).objective
    assert len(objective) == 51
    for before, after in zip(objective, objective[1:]):
        assert after <= before * (1 + 1e-9) + 1e-12


def test_als_rejects_mismatched_mask():
    with pytest.raises(DimensionMismatch):
        als_fit(np.eye(3), np.ones((2, 2)), 1)


def test_efficient_loss_is_at_least_optimal(solved):
    result, fact = solved(64)
    sw = fit_structured(fact.w, 3, 3)
    report = efficient_loss(sw, prefix_sum_matrix(64))
    assert report.root_loss >= result.root_loss * (1 - 1e-9)
    assert report.root_loss <= result.root_loss * 1.2


def test_structured_factorization_is_a_streaming_pair(solved):
    _, fact = solved(32)
    sw = fit_structured(fact.w, 2, 2)
    pair = structured_factorization(sw, prefix_sum_matrix(32))
    assert np.array_equal(pair.w, assemble(sw))
    assert np.allclose(pair.w @ pair.h, prefix_sum_matrix(32))
    assert is_streaming_pair(pair.w, pair.h)
    with pytest.raises(DimensionMismatch):
        structured_factorization(sw, prefix_sum_matrix(16))


def test_stream_matches_dense_product():
    rng = np.random.default_rng(7)
    for _ in range(100):
        n = int(rng.integers(1, 129))
        d = int(rng.integers(0, min(n, 8) + 1))
        r = int(rng.integers(1, 5))
        sw = _random_structured(rng, n, d, r)
        z = rng.standard_normal(n)
        assert np.allclose(stream_noise(sw, z), assemble(sw) @ z, rtol=0, atol=1e-10)


def test_stream_multiply_count():
    rng = np.random.default_rng(8)
    sw = _random_structured(rng, 40, 5, 3)
    state = init_noise_stream(sw)
    for _ in range(40):
        _, state = noise_stream_step(sw, state, rng.standard_normal())
        assert state.last_multiplies <= sw.d + 2 * sw.r
        assert len(state.recent_noise) == min(state.step, sw.d)


def test_stream_of_vector_noise():
    rng = np.random.default_rng(9)
    sw = _random_structured(rng, 20, 3, 2)
    z = rng.standard_normal((20, 4))
    assert np.allclose(stream_noise(sw, z), assemble(sw) @ z, atol=1e-10)


def test_stream_exhausted():
    sw = _random_structured(np.random.default_rng(10), 3, 1, 1)
    state = init_noise_stream(sw)
    for _ in range(3):
        _, state = noise_stream_step(sw, state, 1.0)
    with pytest.raises(StreamExhausted):
        noise_stream_step(sw, state, 1.0)


@pytest.mark.parametrize("n", [256, 512, 1024])
def test_table_efficient_column(n, solved):
    result, fact = solved(n)
    d, r = TABLE_DR[n]
    root = efficient_loss(fit_structured(fact.w, d, r), fact.s).root_loss
    assert abs(root - TABLE_EFFICIENT[n]) / TABLE_EFFICIENT[n] <= 0.03
    assert root >= result.root_loss * (1 - 1e-9)


@pytest.mark.slow
@pytest.mark.parametrize("n", [2048, 4096])
def test_table_efficient_column_large(n, solved):
    result, fact = solved(n)
    d, r = TABLE_DR[n]
    root = efficient_loss(fit_structured(fact.w, d, r), fact.s).root_loss
    assert abs(root - TABLE_EFFICIENT[n]) / TABLE_EFFICIENT[n] <= 0.03
    assert root >= result.root_loss * (1 - 1e-9)
