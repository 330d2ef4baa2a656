"""Prefect 3 flows and tasks for the benchmark table.

Each task wraps one column of one row; the table flow submits every size at
once so a ThreadPoolTaskRunner with --jobs workers solves sizes in parallel.
The efficient column depends on the optimal factorization of the same size
and is chained on its future.
"""

from __future__ import annotations

import sys
from pathlib import Path
from time import perf_counter

from loguru import logger
from prefect import flow, task
from prefect.cache_policies import NO_CACHE
from prefect.task_runners import ThreadPoolTaskRunner

# Ensure the project root is on sys.path when this module is imported
# directly (e.g. via `poetry run python src/dppf/flows.py`).
_PROJECT_ROOT = str(Path(__file__).resolve().parents[2])
if _PROJECT_ROOT not in sys.path:
    sys.path.insert(0, _PROJECT_ROOT)

from src.dppf import bench  # noqa: E402
from src.dppf.models import AlsConfig, SolverConfig, StreamingFactorization, TableRow  # noqa: E402


# ---------------------------------------------------------------------------
# Tasks
# ---------------------------------------------------------------------------


@task(name="honaker-column", cache_policy=NO_CACHE)
def honaker_column_task(n: int) -> float:
    return bench.honaker_root_loss(n)


@task(name="optimal-column", cache_policy=NO_CACHE)
def optimal_column_task(n: int, cfg: SolverConfig) -> tuple[float, StreamingFactorization]:
    """Solve for the optimal factorization of S(n). Returns (√loss, factorization)."""
    result, factorization = bench.optimal_factorization(n, cfg)
    return result.root_loss, factorization


@task(name="efficient-column", cache_policy=NO_CACHE)
def efficient_column_task(
    optimal: tuple[float, StreamingFactorization], d: int, r: int, als: AlsConfig
) -> float:
    return bench.efficient_root_loss(optimal[1], d, r, als)


@task(name="lower-bound-column", cache_policy=NO_CACHE)
def lower_bound_task(n: int) -> float:
    return bench.lower_bound_root(n)


# ---------------------------------------------------------------------------
# Flows
# ---------------------------------------------------------------------------


@flow(name="loss-table", log_prints=True)
def table_flow(
    sizes: list[int],
    cfg: SolverConfig,
    dr_pairs: list[tuple[int, int]] | None = None,
    als: AlsConfig = AlsConfig(),
    lowerbound: bool = False,
) -> list[TableRow]:
    """All rows of the loss table; rows come back in the order of ``sizes``."""
    t0 = perf_counter()
    futures = []
    for i, n in enumerate(sizes):
        honaker = honaker_column_task.submit(n)
        optimal = optimal_column_task.submit(n, cfg)
        efficient = (
            efficient_column_task.submit(optimal, *dr_pairs[i], als) if dr_pairs else None
        )
        bound = lower_bound_task.submit(n) if lowerbound else None
        futures.append((n, honaker, optimal, efficient, bound))

    rows = []
    for i, (n, honaker, optimal, efficient, bound) in enumerate(futures):
        row = TableRow(n=n, honaker=honaker.result(), optimal=optimal.result()[0])
        if efficient is not None:
            row.d, row.r = dr_pairs[i]
            row.efficient = efficient.result()
        if bound is not None:
            row.lower_bound = bound.result()
        rows.append(row)

    logger.info(f"[table_flow] {len(rows)} row(s) in {perf_counter() - t0:.1f}s")
    return rows


def run_table_flow(
    sizes: list[int],
    cfg: SolverConfig,
    jobs: int,
    dr_pairs: list[tuple[int, int]] | None = None,
    als: AlsConfig = AlsConfig(),
    lowerbound: bool = False,
) -> list[TableRow]:
    runner = ThreadPoolTaskRunner(max_workers=jobs)
    return table_flow.with_options(task_runner=runner)(
        sizes, cfg, dr_pairs=dr_pairs, als=als, lowerbound=lowerbound
    )
