"""Banded plus low-rank approximation of W and its O(d + r) per-step noise stream.

Ŵ = (A·Bᵀ)⊙M + D, where D keeps the first d diagonals of W exactly and M
covers every entry with i − j ≥ d. Noise for round i is then

    y_i = Σ_{k<d} D[i, i−k]·z_{i−k} + A[i]·β_i,   β_i = Σ_{j ≤ i−d} z_j·B[j],

so a stream only needs β and the last d noise draws.
"""

from __future__ import annotations

from time import perf_counter

import numpy as np
from loguru import logger

from src.dppf import settings
from src.dppf.errors import DimensionMismatch, InfeasibleFactorization, StreamExhausted
from src.dppf.linalg_core import pinv, relative_residual, tri_solve_lower
from src.dppf.loss import loss_of
from src.dppf.models import (
    AlsConfig,
    AlsFit,
    LossReport,
    NoiseStreamState,
    StreamingFactorization,
    StructuredW,
)


def band_split(w: np.ndarray, d: int) -> tuple[np.ndarray, np.ndarray]:
    """(band, mask): the first d diagonals of w, and a 0/1 mask of its other nonzeros."""
    w = np.asarray(w, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise DimensionMismatch(f"w must be square, got shape {w.shape}")
    if d < 0:
        raise ValueError(f"band count d must be >= 0, got {d}")
    n = w.shape[0]
    offset = np.subtract.outer(np.arange(n), np.arange(n))
    in_band = (offset >= 0) & (offset < d)
    band = np.where(in_band, w, 0.0)
    mask = ((offset >= d) & (w != 0)).astype(float)
    return band, mask


def _objective(w: np.ndarray, mask: np.ndarray, a: np.ndarray, b: np.ndarray, reg: float) -> float:
    misfit = mask * (a @ b.T - w)
    return float(np.sum(misfit**2) + reg * (np.sum(a**2) + np.sum(b**2)))


def _ridge_rows(target: np.ndarray, mask: np.ndarray, other: np.ndarray, reg: float) -> np.ndarray:
    """Row-wise masked ridge regression of target onto other.

    Row i solves (Σ_j mask[i,j]·o_j o_jᵀ + reg·I)·x = Σ_j mask[i,j]·target[i,j]·o_j.
    """
    n, r = target.shape[0], other.shape[1]
    outer = (other[:, :, None] * other[:, None, :]).reshape(other.shape[0], r * r)
    grams = (mask @ outer).reshape(n, r, r) + reg * np.eye(r)
    rhs = (mask * target) @ other
    return np.linalg.solve(grams, rhs[..., None])[..., 0]


def als_fit(w: np.ndarray, mask: np.ndarray, r: int, cfg: AlsConfig = AlsConfig()) -> AlsFit:
    """Alternating ridge regressions for min ‖mask⊙(ABᵀ − w)‖² + reg(‖A‖² + ‖B‖²).

    The objective is recorded before the first sweep and after every sweep;
    each half-step is an exact minimization, so the trace never increases.
    """
    w = np.asarray(w, dtype=float)
    mask = np.asarray(mask, dtype=float)
    if mask.shape != w.shape:
        raise DimensionMismatch(f"mask {mask.shape} does not match w {w.shape}")
    if r < 1:
        raise ValueError(f"rank r must be >= 1, got {r}")

    rng = np.random.default_rng(cfg.seed)
    a = cfg.init_scale * rng.standard_normal((w.shape[0], r))
    b = cfg.init_scale * rng.standard_normal((w.shape[1], r))
    objective = [_objective(w, mask, a, b, cfg.reg)]

    for sweep in range(1, cfg.sweeps + 1):
        a = _ridge_rows(w, mask, b, cfg.reg)
        b = _ridge_rows(w.T, mask.T, a, cfg.reg)
        objective.append(_objective(w, mask, a, b, cfg.reg))
        if objective[-1] > objective[-2] * (1 + 1e-9) + 1e-12:
            logger.warning(
                f"[als r={r}] objective rose at sweep {sweep}: "
                f"{objective[-2]:.6e} -> {objective[-1]:.6e}"
            )

    logger.debug(f"[als r={r}] objective {objective[0]:.4e} -> {objective[-1]:.4e}")
    return AlsFit(a=a, b=b, objective=objective)


def fit_structured(w: np.ndarray, d: int, r: int, cfg: AlsConfig = AlsConfig()) -> StructuredW:
    w = np.asarray(w, dtype=float)
    t0 = perf_counter()
    band, mask = band_split(w, d)
    fit = als_fit(w, mask, r, cfg)
    logger.info(
        f"[approx n={w.shape[0]} d={d} r={r}] ALS objective {fit.objective[-1]:.4e} "
        f"in {perf_counter() - t0:.1f}s"
    )
    return StructuredW(n=w.shape[0], d=d, r=r, band=band, a=fit.a, b=fit.b)


def assemble(sw: StructuredW) -> np.ndarray:
    return (sw.a @ sw.b.T) * sw.mask + sw.band


def structured_factorization(sw: StructuredW, s: np.ndarray) -> StreamingFactorization:
    """Ŵ together with the H that makes Ŵ·H = S exactly."""
    s = np.asarray(s, dtype=float)
    w_hat = assemble(sw)
    if s.shape[0] != sw.n:
        raise DimensionMismatch(f"s {s.shape} does not match n={sw.n}")
    if np.all(np.diag(w_hat) != 0):
        h = tri_solve_lower(w_hat, s)
    else:
        h = pinv(w_hat) @ s
    residual = relative_residual(w_hat @ h, s)
    if residual > settings.FACTORIZATION_RTOL:
        raise InfeasibleFactorization(
            f"structured W cannot reproduce s (relative residual {residual:.3e})"
        )
    return StreamingFactorization(s=s, w=w_hat, h=h)


def efficient_loss(sw: StructuredW, s: np.ndarray) -> LossReport:
    """Loss of Ŵ paired with the H that makes Ŵ·H = S exactly."""
    factorization = structured_factorization(sw, s)
    return loss_of(factorization.w, factorization.h)


# ---------------------------------------------------------------------------
# Streaming noise generation
# ---------------------------------------------------------------------------


def init_noise_stream(sw: StructuredW, m: int | None = None) -> NoiseStreamState:
    shape = (sw.r,) if m is None else (sw.r, m)
    return NoiseStreamState(beta=np.zeros(shape))


def noise_stream_step(
    sw: StructuredW, state: NoiseStreamState, z_t: float | np.ndarray
) -> tuple[float | np.ndarray, NoiseStreamState]:
    """Correlated noise y_t = (Ŵ·z)_t from z_1..z_t, in O(d + r) multiplies."""
    i = state.step
    if i >= sw.n:
        raise StreamExhausted(f"all {sw.n} steps have been produced")
    z_t = np.asarray(z_t, dtype=float)
    if z_t.shape != state.beta.shape[1:]:
        raise DimensionMismatch(f"noise of shape {z_t.shape} does not match the stream")

    recent = state.recent_noise
    beta = state.beta
    multiplies = 0
    if i >= sw.d:
        # the draw leaving the band window enters the low-rank accumulator
        leaving = recent[0] if sw.d > 0 else z_t
        beta = beta + np.multiply.outer(sw.b[i - sw.d], leaving)
        multiplies += sw.r
    window = (recent + [z_t])[-sw.d :] if sw.d > 0 else []

    y = np.zeros_like(z_t)
    for lag, z in enumerate(reversed(window)):
        y = y + sw.band[i, i - lag] * z
        multiplies += 1
    if i >= sw.d:
        y = y + np.tensordot(sw.a[i], beta, axes=1)
        multiplies += sw.r

    new_state = NoiseStreamState(
        beta=beta, step=i + 1, recent_noise=window, last_multiplies=multiplies
    )
    return (float(y) if y.ndim == 0 else y), new_state


def stream_noise(sw: StructuredW, z: np.ndarray) -> np.ndarray:
    """All n noise releases for draws z of shape (n,) or (n, m)."""
    z = np.asarray(z, dtype=float)
    if z.shape[0] != sw.n:
        raise DimensionMismatch(f"expected {sw.n} noise draws, got {z.shape[0]}")
    state = init_noise_stream(sw, None if z.ndim == 1 else z.shape[1])
    out = np.zeros_like(z)
    for t in range(sw.n):
        out[t], state = noise_stream_step(sw, state, z[t])
    return out
