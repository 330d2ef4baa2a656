"""Artifact persistence: matrices as CSV, records as JSON, and a run audit record.

Every file is written with fixed formatting so identical runs produce
byte-identical outputs.
"""

import csv
import json
from pathlib import Path

import numpy as np
from loguru import logger
from pydantic import BaseModel

from src.dppf.models import AlsConfig, BenchRun, MechanismRun, StructuredW

MATRIX_FMT = "%.17g"


def save_matrix_csv(path: Path, matrix: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, np.atleast_2d(matrix), fmt=MATRIX_FMT, delimiter=",")
    return path


def load_matrix_csv(path: Path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(Path(path), delimiter=",", dtype=float, ndmin=2))


def load_vector_csv(path: Path) -> np.ndarray:
    """Vector stored one value per line or as a single comma-separated row."""
    return np.loadtxt(Path(path), delimiter=",", dtype=float, ndmin=2).ravel()


def write_json(path: Path, record: BaseModel | dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(record, BaseModel):
        record = record.model_dump(mode="json")
    path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    return path


def write_csv(path: Path, header: list[str], rows: list[list]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(["" if value is None else _format(value) for value in row])
    return path


def _format(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


# ---------------------------------------------------------------------------
# Composite artifacts
# ---------------------------------------------------------------------------


def save_structured(directory: Path, sw: StructuredW, als: AlsConfig) -> list[Path]:
    """band.csv, a.csv, b.csv and meta.json with the ALS settings that produced them."""
    directory = Path(directory)
    meta = {"n": sw.n, "d": sw.d, "r": sw.r, "reg": als.reg, "seed": als.seed, "sweeps": als.sweeps}
    return [
        save_matrix_csv(directory / "band.csv", sw.band),
        save_matrix_csv(directory / "a.csv", sw.a),
        save_matrix_csv(directory / "b.csv", sw.b),
        write_json(directory / "meta.json", meta),
    ]


def load_structured(directory: Path) -> StructuredW:
    directory = Path(directory)
    meta = json.loads((directory / "meta.json").read_text())
    missing = {"n", "d", "r"} - meta.keys()
    if missing:
        raise ValueError(f"{directory / 'meta.json'} lacks {sorted(missing)}")
    a = load_matrix_csv(directory / "a.csv").reshape(meta["n"], meta["r"])
    b = load_matrix_csv(directory / "b.csv").reshape(meta["n"], meta["r"])
    return StructuredW(
        n=meta["n"],
        d=meta["d"],
        r=meta["r"],
        band=load_matrix_csv(directory / "band.csv"),
        a=a,
        b=b,
    )


def save_mechanism_run(directory: Path, run: MechanismRun, header: dict) -> list[Path]:
    rows = [
        [t + 1, run.releases[t], run.true_prefix[t], run.noise_component[t]]
        for t in range(run.releases.size)
    ]
    directory = Path(directory)
    return [
        write_csv(
            directory / "mechanism.csv",
            ["t", "release", "true_prefix", "noise_component"],
            rows,
        ),
        write_json(directory / "mechanism.json", {**header, "seed": run.seed}),
    ]


# ---------------------------------------------------------------------------
# Run audit record
# ---------------------------------------------------------------------------


class RunRecorder:
    """Keeps a BenchRun record for one command so every invocation is auditable.

    The record is written to ``run.json`` in the output directory on success
    and on failure.
    """

    def __init__(self, out_dir: Path, command: str, params: dict):
        self.out_dir = Path(out_dir)
        self.run = BenchRun(
            command=command,
            params={key: _plain(value) for key, value in sorted(params.items())},
        )

    def add(self, *paths: Path) -> None:
        for path in paths:
            self.run.files.append(Path(path).relative_to(self.out_dir).as_posix())

    def succeed(self) -> Path:
        self.run.status = "success"
        logger.info(f"[{self.run.command}] wrote {len(self.run.files)} file(s) to {self.out_dir}")
        return self._write()

    def fail(self, exc: BaseException) -> Path:
        self.run.status = "failed"
        self.run.error_message = f"{type(exc).__name__}: {exc}"
        logger.error(f"[{self.run.command}] failed: {self.run.error_message}")
        return self._write()

    def _write(self) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        return write_json(self.out_dir / "run.json", self.run)


def _plain(value):
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value
