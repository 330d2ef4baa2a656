"""Fixed-point solver for the optimal factorization of a full-rank square S.

The optimal Gram matrix X* = HᵀH (unit diagonal) is recovered from the
multipliers λ that solve λ = φ(λ), where

    φ(v) = diag( sqrt( diag(v)^½ · SᵀS · diag(v)^½ ) ).

Iteration stops once ‖φ(v) − v‖/‖v‖ < rtol and the distance to the fixed
point, estimated from the observed contraction rate, is below rtol too;
that v is returned as λ and
X* = diag(λ)^-½ · sqrt(diag(λ)^½ SᵀS diag(λ)^½) · diag(λ)^-½, rescaled to an
exact unit diagonal. φ is homogeneous of degree ½, which is what drives the
geometric convergence observed in practice.
"""

from __future__ import annotations

from time import perf_counter

import numpy as np
from loguru import logger

from src.dppf import settings
from src.dppf.errors import (
    DimensionMismatch,
    NoConvergence,
    NonPositiveInput,
    NotPositiveDefinite,
    SingularS,
)
from src.dppf.linalg_core import cholesky, relative_residual, symmetric_sqrt_factors
from src.dppf.loss import trace_loss
from src.dppf.models import FixedPointResult, RtolPoint, SolverConfig


def _gram(s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1] or s.shape[0] < 1:
        raise DimensionMismatch(f"s must be a non-empty square matrix, got shape {s.shape}")
    gram = s.T @ s
    return (gram + gram.T) / 2


def _require_full_rank(gram: np.ndarray) -> None:
    try:
        cholesky(gram)
    except NotPositiveDefinite as exc:
        raise SingularS("s is not full rank") from exc


def _check_vector(v: np.ndarray, n: int) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (n,):
        raise DimensionMismatch(f"vector of shape {v.shape} does not match n={n}")
    if np.any(v <= 0):
        raise NonPositiveInput("every entry of v must be strictly positive")
    return v


def _sqrt_parts(v: np.ndarray, gram: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    root_v = np.sqrt(v)
    return symmetric_sqrt_factors(root_v[:, None] * gram * root_v[None, :])


def _diag_of_sqrt(eigvals: np.ndarray, eigvecs: np.ndarray) -> np.ndarray:
    return (eigvecs**2) @ np.sqrt(eigvals)


def phi(v: np.ndarray, s: np.ndarray) -> np.ndarray:
    gram = _gram(s)
    v = _check_vector(v, gram.shape[0])
    return _diag_of_sqrt(*_sqrt_parts(v, gram))


def _kkt(gram: np.ndarray, x: np.ndarray, lam: np.ndarray) -> float:
    return relative_residual(x @ (lam[:, None] * x), gram)


def kkt_residual(s: np.ndarray, x: np.ndarray, lam: np.ndarray) -> float:
    """‖SᵀS − X·diag(λ)·X‖_F / ‖SᵀS‖_F."""
    gram = _gram(s)
    n = gram.shape[0]
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if x.shape != (n, n) or lam.shape != (n,):
        raise DimensionMismatch(f"x {x.shape} and lambda {lam.shape} do not match n={n}")
    return _kkt(gram, x, lam)


def _initial_vector(n: int, cfg: SolverConfig) -> np.ndarray:
    if cfg.init == "random":
        return np.random.default_rng(cfg.seed).uniform(0.5, 1.5, size=n)
    return np.ones(n)


def _build_result(
    s: np.ndarray,
    gram: np.ndarray,
    lam: np.ndarray,
    eigvals: np.ndarray,
    eigvecs: np.ndarray,
    iterations: int,
    fp_residual: float,
    residuals: list[float],
) -> FixedPointResult:
    root = (eigvecs * np.sqrt(eigvals)) @ eigvecs.T
    root = (root + root.T) / 2
    inv_root_lam = 1.0 / np.sqrt(lam)
    x = root * inv_root_lam[:, None] * inv_root_lam[None, :]

    diag = np.diag(x).copy()
    diag_drift = float(np.max(np.abs(diag - 1.0)))
    x = x / np.sqrt(np.outer(diag, diag))
    x = (x + x.T) / 2
    np.fill_diagonal(x, 1.0)

    return FixedPointResult(
        n=gram.shape[0],
        lam=lam,
        x_star=x,
        iterations=iterations,
        fp_residual=fp_residual,
        kkt_residual=_kkt(gram, x, lam),
        loss=trace_loss(s, x),
        diag_drift=diag_drift,
        residuals=residuals,
    )


def _distance_to_fixed_point(residual: float, previous: float) -> float:
    """residual / (1 − q̂) with q̂ the ratio of consecutive residuals.

    Infinite until the iteration is observed to contract.
    """
    if residual <= settings.SOLVER_RESIDUAL_FLOOR:
        return residual
    if not np.isfinite(previous) or previous <= 0.0:
        return float("inf")
    rate = residual / previous
    if rate >= 1.0:
        return float("inf")
    return residual / (1.0 - rate)


def _iterate(
    gram: np.ndarray,
    cfg: SolverConfig,
    thresholds: list[float],
    trace: list[float] | None = None,
):
    """Run λ ← φ(λ), yielding (threshold, λ, eigen-parts, iteration, residual).

    Each threshold is yielded once, at the first iterate whose residual and
    estimated distance to the fixed point both drop below it; iteration ends
    when the smallest threshold has been reached.
    """
    n = gram.shape[0]
    v = _initial_vector(n, cfg)
    pending = sorted(thresholds, reverse=True)
    residual = float("inf")
    for iteration in range(1, cfg.max_iter + 1):
        eigvals, eigvecs = _sqrt_parts(v, gram)
        phi_v = _diag_of_sqrt(eigvals, eigvecs)
        previous = residual
        residual = float(np.linalg.norm(phi_v - v) / np.linalg.norm(v))
        if trace is not None:
            trace.append(residual)
        distance = _distance_to_fixed_point(residual, previous)
        yield_now = [t for t in pending if residual < t and distance < t]
        for threshold in yield_now:
            pending.remove(threshold)
            yield threshold, v, eigvals, eigvecs, iteration, residual
        if not pending:
            return
        if iteration % settings.SOLVER_LOG_EVERY == 0:
            logger.debug(f"[solve n={n}] iteration {iteration}: residual={residual:.3e}")
        v = phi_v
    raise NoConvergence(last_iterate=v, residual=residual, iterations=cfg.max_iter)


def solve(s: np.ndarray, cfg: SolverConfig = SolverConfig()) -> FixedPointResult:
    s = np.asarray(s, dtype=float)
    gram = _gram(s)
    _require_full_rank(gram)
    n = gram.shape[0]

    logger.info(f"[solve n={n}] starting fixed-point iteration (rtol={cfg.rtol:g}, init={cfg.init})")
    t0 = perf_counter()
    residuals: list[float] = []
    for _, lam, eigvals, eigvecs, iteration, residual in _iterate(
        gram, cfg, [cfg.rtol], residuals
    ):
        result = _build_result(s, gram, lam, eigvals, eigvecs, iteration, residual, residuals)

    elapsed = perf_counter() - t0
    logger.info(
        f"[solve n={n}] converged in {result.iterations} iterations "
        f"(fp_residual={result.fp_residual:.2e}, kkt_residual={result.kkt_residual:.2e}, "
        f"root_loss={result.root_loss:.4f}) in {elapsed:.1f}s"
    )
    return result


def rtol_sweep(
    s: np.ndarray, rtols: list[float], cfg: SolverConfig = SolverConfig()
) -> list[RtolPoint]:
    """Loss reached at each stopping tolerance, from a single iteration run.

    Identical to calling ``solve`` once per tolerance from the same start.
    """
    if not rtols or any(t <= 0 for t in rtols):
        raise ValueError("rtols must be a non-empty list of positive tolerances")
    s = np.asarray(s, dtype=float)
    gram = _gram(s)
    _require_full_rank(gram)
    n = gram.shape[0]
    cap = cfg.model_copy(update={"rtol": min(rtols)})

    points: list[RtolPoint] = []
    for threshold, lam, eigvals, eigvecs, iteration, residual in _iterate(gram, cap, rtols):
        result = _build_result(s, gram, lam, eigvals, eigvecs, iteration, residual, [])
        logger.info(
            f"[rtol-sweep n={n}] rtol={threshold:g}: {iteration} iterations, "
            f"root_loss={result.root_loss:.6f}"
        )
        points.append(
            RtolPoint(
                rtol=threshold,
                loss=result.loss,
                root_loss=result.root_loss,
                iterations=iteration,
            )
        )
    return points
