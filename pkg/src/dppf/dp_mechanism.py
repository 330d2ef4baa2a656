"""Gaussian matrix mechanism: calibration, releases and sensitivity under adjacency."""

from __future__ import annotations

import math
from collections.abc import Iterator
from functools import lru_cache
from itertools import combinations, product

import numpy as np
from loguru import logger

from src.dppf import settings
from src.dppf.errors import (
    DimensionMismatch,
    InputOutOfRange,
    InvalidPrivacyParams,
    NotSymmetric,
    TooLargeForBruteForce,
)
from src.dppf.linalg_core import max_column_norm
from src.dppf.models import AdjacencySet, MechanismRun, MonteCarloReport, PrivacyParams
from src.dppf.operators import is_streaming_pair, last_nonzero_columns


# ---------------------------------------------------------------------------
# Calibration
# ---------------------------------------------------------------------------


def calibrate_sigma(gamma: float, zeta: float, epsilon: float, delta: float) -> float:
    """σ = 2·Γ·ζ·√ln(1/δ) / ε."""
    if min(gamma, zeta, epsilon, delta) <= 0 or delta >= 1:
        raise InvalidPrivacyParams(
            f"need gamma, zeta, epsilon > 0 and 0 < delta < 1 "
            f"(got gamma={gamma}, zeta={zeta}, epsilon={epsilon}, delta={delta})"
        )
    return 2 * gamma * zeta * math.sqrt(math.log(1 / delta)) / epsilon


def rdp_epsilon(alpha: float, gamma: float, sigma: float) -> float:
    """Rényi-DP ε of the Gaussian mechanism at order α: α·Γ²/(2σ²)."""
    if alpha <= 1 or sigma <= 0 or gamma < 0:
        raise InvalidPrivacyParams(
            f"need alpha > 1, sigma > 0, gamma >= 0 (got {alpha}, {sigma}, {gamma})"
        )
    return alpha * gamma**2 / (2 * sigma**2)


def tree_equivalent_sigma(gamma: float, sigma_tree: float, n: int) -> float:
    """Noise scale giving a factorization with sensitivity Γ the privacy of a
    binary tree over n leaves with per-node noise σ_tree."""
    if n < 1 or sigma_tree <= 0 or gamma < 0:
        raise InvalidPrivacyParams(
            f"need n >= 1, sigma_tree > 0, gamma >= 0 (got {n}, {sigma_tree}, {gamma})"
        )
    # ceil(log2(n + 1)) == n.bit_length() for n >= 1
    return gamma * sigma_tree / math.sqrt(int(n).bit_length())


def noise_generator(seed: int) -> np.random.Generator:
    """Counter-based generator; identical seeds give identical noise everywhere."""
    return np.random.Generator(np.random.Philox(seed))


# ---------------------------------------------------------------------------
# Running the mechanism
# ---------------------------------------------------------------------------


def _streaming_releases(w: np.ndarray, h: np.ndarray, x: np.ndarray, z: np.ndarray) -> np.ndarray:
    n, d = w.shape
    last = last_nonzero_columns(h)
    order = np.argsort(last, kind="stable")
    measured = np.zeros(d)
    releases = np.zeros(n)
    ready = 0
    for t in range(n):
        while ready < d and last[order[ready]] <= t:
            j = order[ready]
            measured[j] = h[j, : t + 1] @ x[: t + 1] + z[j]
            ready += 1
        releases[t] = w[t] @ measured
    return releases


def run_mechanism(
    w: np.ndarray,
    h: np.ndarray,
    x: np.ndarray,
    priv: PrivacyParams,
    seed: int,
    noise: np.ndarray | None = None,
) -> MechanismRun:
    """Release W·(H·x + z), z ~ N(0, σ²I) drawn from ``seed``.

    ``noise`` overrides the draw (used to check the mechanism exactly). When
    (W, H) is streaming, release t only touches measurements available by t.
    """
    w = np.asarray(w, dtype=float)
    h = np.asarray(h, dtype=float)
    x = np.asarray(x, dtype=float)
    n, d = w.shape
    if h.shape != (d, n) or x.shape != (n,):
        raise DimensionMismatch(f"w {w.shape}, h {h.shape} and x {x.shape} do not fit together")
    if np.any(np.abs(x) > priv.zeta):
        worst = int(np.argmax(np.abs(x)))
        raise InputOutOfRange(f"|x[{worst}]| = {abs(x[worst]):g} exceeds zeta={priv.zeta:g}")

    gamma = max_column_norm(h)
    if abs(gamma - priv.gamma) > 1e-9 * max(gamma, 1.0):
        logger.warning(f"[mechanism] priv.gamma={priv.gamma:.6f} but h has gamma={gamma:.6f}")

    if noise is None:
        z = priv.sigma * noise_generator(seed).standard_normal(d)
    else:
        z = np.asarray(noise, dtype=float)
        if z.shape != (d,):
            raise DimensionMismatch(f"noise of shape {z.shape} does not match d={d}")

    if is_streaming_pair(w, h):
        releases = _streaming_releases(w, h, x, z)
    else:
        logger.debug(f"[mechanism] pair is not streaming; releasing n={n} values at once")
        releases = w @ (h @ x + z)

    return MechanismRun(
        releases=releases,
        true_prefix=np.cumsum(x),
        noise_used=z,
        noise_component=w @ z,
        seed=seed,
    )


def estimate_errors(w: np.ndarray, sigma: float, replicates: int, seed: int) -> MonteCarloReport:
    """Monte Carlo estimate of the per-step variance of W·z, z ~ N(0, σ²I)."""
    w = np.asarray(w, dtype=float)
    if replicates < 1:
        raise ValueError(f"replicates must be >= 1, got {replicates}")
    gen = noise_generator(seed)
    n, d = w.shape
    sq_sum = np.zeros(n)
    remaining = replicates
    while remaining:
        batch = min(remaining, settings.MONTE_CARLO_BATCH)
        errors = sigma * gen.standard_normal((batch, d)) @ w.T
        sq_sum += np.sum(errors**2, axis=0)
        remaining -= batch
    per_step = sq_sum / replicates
    return MonteCarloReport(
        replicates=replicates,
        sigma=sigma,
        mean_total_sq_error=float(per_step.sum()),
        per_step_variance=per_step,
    )


# ---------------------------------------------------------------------------
# Sensitivity under generalized adjacency
# ---------------------------------------------------------------------------


def _windows(n: int, size: int) -> list[range]:
    return [range(start, min(start + size, n)) for start in range(0, n, size)]


def candidate_count(adj: AdjacencySet) -> int:
    """Number of (support, sign pattern) deltas brute force would visit."""
    n = adj.n
    match adj.kind:
        case "singletons":
            return 2 * n
        case "explicit":
            return len(adj.deltas)
        case "k_participations":
            return sum(math.comb(n, s) * 2**s for s in range(1, min(adj.k, n) + 1))
        case "min_gap":
            # counts[i]: signed supports (empty included) using positions >= i
            counts = [1] * (n + adj.tau + 1)
            for i in range(n - 1, -1, -1):
                counts[i] = counts[i + 1] + 2 * counts[i + adj.tau]
            return counts[0] - 1
        case "fixed_windows":
            return math.prod(1 + 2 * len(win) for win in _windows(n, adj.window)) - 1
    raise ValueError(f"unknown adjacency kind {adj.kind!r}")


def _min_gap_supports(n: int, tau: int, start: int = 0) -> Iterator[tuple[int, ...]]:
    for first in range(start, n):
        yield (first,)
        for rest in _min_gap_supports(n, tau, first + tau):
            yield (first,) + rest


def _supports(adj: AdjacencySet) -> Iterator[tuple[int, ...]]:
    match adj.kind:
        case "k_participations":
            for size in range(1, min(adj.k, adj.n) + 1):
                yield from combinations(range(adj.n), size)
        case "min_gap":
            yield from _min_gap_supports(adj.n, adj.tau)
        case "fixed_windows":
            choices = [(None, *win) for win in _windows(adj.n, adj.window)]
            for picked in product(*choices):
                support = tuple(i for i in picked if i is not None)
                if support:
                    yield support


@lru_cache(maxsize=32)
def _sign_vertices(size: int) -> np.ndarray:
    return np.array(list(product((-1.0, 1.0), repeat=size)))


def _delta_blocks(adj: AdjacencySet) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """(support, deltas restricted to support) blocks covering every candidate."""
    count = candidate_count(adj)
    if count > settings.MAX_BRUTE_FORCE_CANDIDATES:
        raise TooLargeForBruteForce(count, settings.MAX_BRUTE_FORCE_CANDIDATES)
    if adj.kind == "explicit":
        yield np.arange(adj.n), np.array(adj.deltas, dtype=float)
        return
    if adj.kind == "singletons":
        for i in range(adj.n):
            yield np.array([i]), adj.zeta * _sign_vertices(1)
        return
    for support in _supports(adj):
        yield np.array(support), adj.zeta * _sign_vertices(len(support))


def generalized_sensitivity(h: np.ndarray, adj: AdjacencySet) -> float:
    """max over adjacent deltas of ‖H·Δ‖₂."""
    h = np.asarray(h, dtype=float)
    if h.ndim != 2 or h.shape[1] != adj.n:
        raise DimensionMismatch(f"h {h.shape} does not act on vectors of length {adj.n}")
    if adj.kind == "singletons":
        return adj.zeta * max_column_norm(h)
    best = 0.0
    for support, deltas in _delta_blocks(adj):
        images = h[:, support] @ deltas.T
        best = max(best, float(np.sqrt(np.max(np.sum(images**2, axis=0)))))
    return best


def check_quadratic_form(x: np.ndarray, adj: AdjacencySet) -> bool:
    """True iff Δᵀ·X·Δ <= 1 for every adjacent delta."""
    x = np.asarray(x, dtype=float)
    if x.shape != (adj.n, adj.n):
        raise DimensionMismatch(f"x {x.shape} does not match n={adj.n}")
    if np.linalg.norm(x - x.T) > settings.SYM_TOL * max(np.linalg.norm(x), settings.RESIDUAL_TINY):
        raise NotSymmetric(f"x of shape {x.shape} is not symmetric within {settings.SYM_TOL:g}")
    worst = 0.0
    for support, deltas in _delta_blocks(adj):
        block = x[np.ix_(support, support)]
        worst = max(worst, float(np.max(np.sum((deltas @ block) * deltas, axis=1))))
    return worst <= 1 + settings.QUADRATIC_FORM_SLACK
