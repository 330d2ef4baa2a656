"""Experiment drivers behind the CLI: one function per table column or figure.

These are plain functions; ``flows.py`` wraps them as prefect tasks.
"""

from __future__ import annotations

import math
from time import perf_counter

import numpy as np
from loguru import logger

from src.dppf.dp_mechanism import tree_equivalent_sigma
from src.dppf.linalg_core import max_column_norm
from src.dppf.loss import loss_of
from src.dppf.models import (
    AlsConfig,
    FixedPointResult,
    RtolPoint,
    SolverConfig,
    StreamingFactorization,
    TableRow,
)
from src.dppf.operators import prefix_sum_matrix, tree_levels_for
from src.dppf.optimal_solver import rtol_sweep, solve
from src.dppf.spectrum_bounds import generic_lower_bound
from src.dppf.streaming_factor import factorize_streaming
from src.dppf.structured_efficient import efficient_loss, fit_structured
from src.dppf.tree_baselines import honaker_below, per_step_variance


def optimal_factorization(
    n: int, cfg: SolverConfig
) -> tuple[FixedPointResult, StreamingFactorization]:
    s = prefix_sum_matrix(n)
    result = solve(s, cfg)
    return result, factorize_streaming(s, result)


def honaker_root_loss(n: int) -> float:
    tree = honaker_below(tree_levels_for(n))
    return loss_of(tree.w, tree.h).root_loss


def efficient_root_loss(
    factorization: StreamingFactorization, d: int, r: int, als: AlsConfig
) -> float:
    sw = fit_structured(factorization.w, d, r, als)
    return efficient_loss(sw, factorization.s).root_loss


def lower_bound_root(n: int) -> float:
    return math.sqrt(generic_lower_bound(prefix_sum_matrix(n)))


def table_row(
    n: int,
    cfg: SolverConfig,
    dr: tuple[int, int] | None = None,
    als: AlsConfig = AlsConfig(),
    lowerbound: bool = False,
) -> TableRow:
    logger.info(f"[table n={n}] starting row")
    t0 = perf_counter()
    row = TableRow(n=n, honaker=honaker_root_loss(n))
    result, factorization = optimal_factorization(n, cfg)
    row.optimal = result.root_loss
    if dr is not None:
        row.d, row.r = dr
        row.efficient = efficient_root_loss(factorization, *dr, als)
    if lowerbound:
        row.lower_bound = lower_bound_root(n)
    logger.info(
        f"[table n={n}] honaker={row.honaker:.1f} optimal={row.optimal:.1f} "
        f"efficient={row.efficient} in {perf_counter() - t0:.1f}s"
    )
    return row


def variance_curves(n: int, cfg: SolverConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per-step variance of Honaker-below (unit node noise) and of the optimal
    factorization at the same privacy level."""
    tree = honaker_below(tree_levels_for(n))
    honaker = per_step_variance(tree.w, 1.0)
    _, factorization = optimal_factorization(n, cfg)
    sigma = tree_equivalent_sigma(max_column_norm(factorization.h), 1.0, n)
    optimal = per_step_variance(factorization.w, sigma)
    logger.info(
        f"[variance n={n}] mean honaker={honaker.mean():.3f} optimal={optimal.mean():.3f}"
    )
    return honaker, optimal


def rtol_sweep_points(n: int, rtols: list[float], cfg: SolverConfig) -> list[RtolPoint]:
    return rtol_sweep(prefix_sum_matrix(n), rtols, cfg)
