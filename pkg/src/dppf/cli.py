"""Command-line front end for dppf.

Usage:
    poetry run dppf solve --n 256
    poetry run dppf table --efficient --lowerbound
    poetry run dppf table --slow --prefect --jobs 4
    poetry run dppf variance --n 1024
    poetry run dppf rtol-sweep --n 512 --rtols 1e-2 1e-5 1e-8
    poetry run dppf approx --n 256 --d 4 --r 4
    poetry run dppf run --n 64 --epsilon 1 --delta 1e-6 --input x.csv
    poetry run dppf run --n 256 --structured results/structured
    poetry run dppf sens --n 8 --kind k_participations --k 2
    poetry run dppf lowerbound --n 4096

Every command writes its outputs plus a ``run.json`` audit record into
``--out`` (default ``$DPPF_OUT_DIR`` or ``results``). A JSON ``--config``
file supplies BenchConfig defaults; flags override it.

Exit codes: 0 success, 1 I/O, 2 non-convergence, 64 usage, 65 bad data.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
from loguru import logger
from pydantic import ValidationError

from src.dppf import bench, settings
from src.dppf.dp_mechanism import (
    candidate_count,
    check_quadratic_form,
    generalized_sensitivity,
    run_mechanism,
)
from src.dppf.errors import DPPFError, NoConvergence, UnsupportedSize
from src.dppf.linalg_core import max_column_norm
from src.dppf.loss import loss_of
from src.dppf.models import (
    AdjacencySet,
    BenchConfig,
    PrivacyParams,
    StreamingFactorization,
    TableRow,
)
from src.dppf.operators import prefix_sum_matrix, tree_levels_for
from src.dppf.pipelines import (
    RunRecorder,
    load_matrix_csv,
    load_structured,
    load_vector_csv,
    save_matrix_csv,
    save_mechanism_run,
    save_structured,
    write_csv,
    write_json,
)
from src.dppf.spectrum_bounds import spectrum_report
from src.dppf.structured_efficient import (
    efficient_loss,
    fit_structured,
    structured_factorization,
)


class UsageError(Exception):
    """Flags are well-formed but do not describe a runnable command."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(settings.EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _require_n(n: int | None) -> int:
    if n is None or n < 1:
        raise UsageError(f"--n must be a positive integer, got {n}")
    return n


def _require_power_of_two(n: int) -> int:
    try:
        tree_levels_for(n)
    except UnsupportedSize as exc:
        raise UsageError(str(exc)) from exc
    return n


def _table_sizes(args, cfg: BenchConfig) -> list[int]:
    sizes = list(cfg.sizes)
    if args.slow:
        sizes += [n for n in settings.SLOW_TABLE_SIZES if n not in sizes]
    for n in sizes:
        _require_power_of_two(n)
    return sizes


def _dr_pairs(args, cfg: BenchConfig, sizes: list[int]) -> list[tuple[int, int]]:
    if args.d or args.r:
        if len(args.d or []) != len(sizes) or len(args.r or []) != len(sizes):
            raise UsageError("--d and --r need one value per size")
        return list(zip(args.d, args.r))
    if cfg.dr_pairs and len(cfg.dr_pairs) == len(sizes):
        return list(cfg.dr_pairs)
    missing = [n for n in sizes if n not in settings.TABLE_DR_PAIRS]
    if missing:
        raise UsageError(f"--efficient needs (d, r) pairs for sizes {missing}")
    return [settings.TABLE_DR_PAIRS[n] for n in sizes]


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_solve(args, cfg: BenchConfig, recorder: RunRecorder) -> None:
    n = _require_n(args.n)
    result, factorization = bench.optimal_factorization(n, cfg.solver_config())
    out = cfg.out_dir
    recorder.add(
        save_matrix_csv(out / "x_star.csv", result.x_star),
        save_matrix_csv(out / "w.csv", factorization.w),
        save_matrix_csv(out / "h.csv", factorization.h),
        write_json(
            out / "result.json",
            {
                **result.summary(),
                "factorization": loss_of(factorization.w, factorization.h).model_dump(),
            },
        ),
    )


def cmd_table(args, cfg: BenchConfig, recorder: RunRecorder) -> None:
    sizes = _table_sizes(args, cfg)
    dr_pairs = _dr_pairs(args, cfg, sizes) if args.efficient else None
    solver = cfg.solver_config()

    if args.prefect:
        from src.dppf.flows import run_table_flow

        logger.info(f"Running loss-table flow via Prefect with {cfg.jobs} worker(s)...")
        rows = run_table_flow(
            sizes, solver, cfg.jobs, dr_pairs=dr_pairs, als=cfg.als, lowerbound=args.lowerbound
        )
    else:
        rows: list[TableRow] = []
        for i, n in enumerate(sizes):
            logger.info(f"--- Starting row n={n} ---")
            dr = dr_pairs[i] if dr_pairs else None
            rows.append(bench.table_row(n, solver, dr, cfg.als, args.lowerbound))

    header = ["n", "honaker", "optimal", "efficient", "d", "r"]
    if args.lowerbound:
        header.append("lower_bound")
    body = [
        [row.n, row.honaker, row.optimal, row.efficient, row.d, row.r]
        + ([row.lower_bound] if args.lowerbound else [])
        for row in rows
    ]
    recorder.add(write_csv(cfg.out_dir / "table.csv", header, body))


def cmd_variance(args, cfg: BenchConfig, recorder: RunRecorder) -> None:
    n = _require_power_of_two(_require_n(args.n))
    honaker, optimal = bench.variance_curves(n, cfg.solver_config())
    rows = [[t + 1, honaker[t], optimal[t]] for t in range(n)]
    recorder.add(write_csv(cfg.out_dir / "variance.csv", ["t", "honaker_below", "optimal"], rows))


def cmd_rtol_sweep(args, cfg: BenchConfig, recorder: RunRecorder) -> None:
    n = _require_n(args.n)
    rtols = args.rtols or list(settings.RTOL_SWEEP)
    if any(t <= 0 for t in rtols) or any(a <= b for a, b in zip(rtols, rtols[1:])):
        raise UsageError("--rtols must be positive and strictly descending")
    points = bench.rtol_sweep_points(n, rtols, cfg.solver_config())
    rows = [[p.rtol, p.loss, p.iterations] for p in points]
    recorder.add(write_csv(cfg.out_dir / "rtol_sweep.csv", ["rtol", "loss", "iterations"], rows))


def cmd_approx(args, cfg: BenchConfig, recorder: RunRecorder) -> None:
    n = _require_n(args.n)
    d, r = args.d, args.r
    if d is None or r is None:
        if n not in settings.TABLE_DR_PAIRS:
            raise UsageError(f"--d and --r are required for n={n}")
        d, r = settings.TABLE_DR_PAIRS[n]
    if not 0 <= d <= n or r < 1:
        raise UsageError(f"need 0 <= d <= n and r >= 1 (got d={d}, r={r})")

    result, factorization = bench.optimal_factorization(n, cfg.solver_config())
    sw = fit_structured(factorization.w, d, r, cfg.als)
    report = efficient_loss(sw, factorization.s)
    recorder.add(*save_structured(cfg.out_dir / "structured", sw, cfg.als))
    recorder.add(
        write_json(
            cfg.out_dir / "efficient.json",
            {"efficient": report.model_dump(), "optimal_root_loss": result.root_loss},
        )
    )


def _run_factorization(n: int, args, cfg: BenchConfig) -> StreamingFactorization:
    if args.structured is None:
        return bench.optimal_factorization(n, cfg.solver_config())[1]
    sw = load_structured(args.structured)
    if sw.n != n:
        raise UsageError(f"{args.structured} holds a decoder for n={sw.n}, not n={n}")
    logger.info(f"[run n={n}] structured decoder from {args.structured} (d={sw.d}, r={sw.r})")
    return structured_factorization(sw, prefix_sum_matrix(n))


def cmd_run(args, cfg: BenchConfig, recorder: RunRecorder) -> None:
    n = _require_n(args.n)
    x = load_vector_csv(args.input) if args.input else np.zeros(n)
    factorization = _run_factorization(n, args, cfg)
    priv = PrivacyParams(
        epsilon=cfg.epsilon,
        delta=cfg.delta,
        zeta=cfg.zeta,
        gamma=max_column_norm(factorization.h),
    )
    run = run_mechanism(factorization.w, factorization.h, x, priv, cfg.seed)
    recorder.add(*save_mechanism_run(cfg.out_dir, run, priv.model_dump()))


def cmd_sens(args, cfg: BenchConfig, recorder: RunRecorder) -> None:
    n = _require_n(args.n)
    try:
        adj = AdjacencySet(
            kind=args.kind, n=n, zeta=cfg.zeta, k=args.k, tau=args.tau, window=args.window
        )
    except ValidationError as exc:
        raise UsageError(str(exc)) from exc
    if args.h:
        h = load_matrix_csv(args.h)
    else:
        h = bench.optimal_factorization(n, cfg.solver_config())[1].h

    record = {
        "kind": adj.kind,
        "n": n,
        "zeta": adj.zeta,
        "candidates": candidate_count(adj),
        "sensitivity": generalized_sensitivity(h, adj),
        "singleton_sensitivity": adj.zeta * max_column_norm(h),
        "quadratic_form_ok": check_quadratic_form(h.T @ h, adj),
    }
    recorder.add(write_json(cfg.out_dir / "sens.json", record))


def cmd_lowerbound(args, cfg: BenchConfig, recorder: RunRecorder) -> None:
    n = _require_n(args.n)
    recorder.add(write_json(cfg.out_dir / "spectrum.json", spectrum_report(n)))


COMMANDS = {
    "solve": cmd_solve,
    "table": cmd_table,
    "variance": cmd_variance,
    "rtol-sweep": cmd_rtol_sweep,
    "approx": cmd_approx,
    "run": cmd_run,
    "sens": cmd_sens,
    "lowerbound": cmd_lowerbound,
}


# ---------------------------------------------------------------------------
# Parsing and configuration
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON BenchConfig file (flags override it)")
    common.add_argument("--out", type=Path, help="Output directory")
    common.add_argument("--rtol", type=float, help="Solver stopping tolerance")
    common.add_argument("--seed", type=int, help="Seed for noise and initializations")
    common.add_argument("--verbose", action="store_true", help="Log at DEBUG level")

    parser = _Parser(prog="dppf", description="Optimal factorizations for private prefix sums")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[common], help="Solve for the optimal factorization")
    p.add_argument("--n", type=int, required=True)

    p = sub.add_parser("table", parents=[common], help="Reproduce the √loss table")
    p.add_argument("--sizes", type=int, nargs="+")
    p.add_argument("--d", type=int, nargs="+", help="Band counts, one per size")
    p.add_argument("--r", type=int, nargs="+", help="Ranks, one per size")
    p.add_argument("--slow", action="store_true", help="Also run n=2048 and n=4096")
    p.add_argument("--efficient", action="store_true", help="Add the banded + low-rank column")
    p.add_argument("--lowerbound", action="store_true", help="Add the spectral lower bound")
    p.add_argument("--prefect", action="store_true", help="Run rows through the Prefect flow")
    p.add_argument("--jobs", type=int, help="Prefect worker threads")

    p = sub.add_parser("variance", parents=[common], help="Per-step variance curves")
    p.add_argument("--n", type=int, required=True)

    p = sub.add_parser("rtol-sweep", parents=[common], help="Loss against stopping tolerance")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--rtols", type=float, nargs="+")

    p = sub.add_parser("approx", parents=[common], help="Fit the banded + low-rank W")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int)
    p.add_argument("--r", type=int)

    p = sub.add_parser("run", parents=[common], help="Run the private streaming mechanism")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--zeta", type=float)
    p.add_argument("--input", type=Path, help="CSV vector x (default all zeros)")
    p.add_argument(
        "--structured",
        type=Path,
        help="Directory written by `approx`; release through its banded + low-rank decoder",
    )

    p = sub.add_parser("sens", parents=[common], help="Sensitivity under an adjacency notion")
    p.add_argument("--n", type=int, required=True)
    p.add_argument(
        "--kind",
        choices=["singletons", "k_participations", "min_gap", "fixed_windows"],
        default="singletons",
    )
    p.add_argument("--k", type=int)
    p.add_argument("--tau", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--zeta", type=float)
    p.add_argument("--h", type=Path, help="CSV measurement matrix (default optimal H)")

    p = sub.add_parser("lowerbound", parents=[common], help="Spectral lower bound report")
    p.add_argument("--n", type=int, required=True)

    return parser


_CONFIG_FLAGS = {
    "sizes": "sizes",
    "rtol": "rtol",
    "epsilon": "epsilon",
    "delta": "delta",
    "zeta": "zeta",
    "seed": "seed",
    "jobs": "jobs",
    "out": "out_dir",
}


def load_config(args: argparse.Namespace) -> BenchConfig:
    base = {}
    if args.config is not None:
        base = BenchConfig.model_validate_json(Path(args.config).read_text()).model_dump()
    for flag, field in _CONFIG_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            base[field] = value
    return BenchConfig.model_validate(base)


def _configure_logging(verbose: bool) -> None:
    logger.remove()
    logger.add(sys.stderr, level="DEBUG" if verbose else settings.log_level())


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    _configure_logging(args.verbose)

    try:
        cfg = load_config(args)
    except OSError as exc:
        logger.error(f"Cannot read config: {exc}")
        return settings.EXIT_IO
    except ValidationError as exc:
        logger.error(f"Invalid configuration: {exc}")
        return settings.EXIT_USAGE

    recorder = RunRecorder(cfg.out_dir, args.command, vars(args))
    logger.info(f"--- Starting {args.command} ---")
    try:
        COMMANDS[args.command](args, cfg, recorder)
    except (UsageError, ValidationError) as exc:
        recorder.fail(exc)
        return settings.EXIT_USAGE
    except NoConvergence as exc:
        recorder.fail(exc)
        return settings.EXIT_NO_CONVERGENCE
    except (DPPFError, ValueError) as exc:
        recorder.fail(exc)
        return settings.EXIT_DATA
    except OSError as exc:
        logger.error(f"I/O error: {exc}")
        return settings.EXIT_IO

    recorder.succeed()
    logger.info(f"--- {args.command} finished ---")
    return settings.EXIT_OK


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
