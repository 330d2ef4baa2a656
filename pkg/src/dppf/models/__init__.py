"""Result and state records passed between dppf modules.

Matrix-carrying records hold numpy arrays directly; ``summary()`` gives the
JSON-friendly view that the pipelines write to disk.
"""

from functools import cached_property
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, computed_field, model_validator

from src.dppf.models.config import AlsConfig, BenchConfig, SolverConfig, ToleranceConfig

__all__ = [
    "AdjacencySet",
    "AlsConfig",
    "AlsFit",
    "BenchConfig",
    "BenchRun",
    "FixedPointResult",
    "LossReport",
    "MechanismRun",
    "MonteCarloReport",
    "NoiseStreamState",
    "PrivacyParams",
    "RtolPoint",
    "SolverConfig",
    "SpectrumReport",
    "StreamingFactorization",
    "StructuredW",
    "TableRow",
    "ToleranceConfig",
    "TreeFactorization",
    "TreeMatrix",
]


class _ArrayModel(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)


# ---------------------------------------------------------------------------
# Losses and solver output
# ---------------------------------------------------------------------------


class LossReport(BaseModel):
    gamma: float = Field(ge=0)
    frob_w_sq: float = Field(ge=0)
    loss: float = Field(ge=0)
    root_loss: float = Field(ge=0)


class FixedPointResult(_ArrayModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, populate_by_name=True)

    n: int
    lam: np.ndarray = Field(alias="lambda")
    x_star: np.ndarray
    iterations: int
    fp_residual: float
    kkt_residual: float
    loss: float
    diag_drift: float = 0.0
    residuals: list[float] = Field(default_factory=list)

    @property
    def root_loss(self) -> float:
        return float(np.sqrt(self.loss))

    def summary(self) -> dict:
        return {
            "n": self.n,
            "iterations": self.iterations,
            "fp_residual": self.fp_residual,
            "kkt_residual": self.kkt_residual,
            "diag_drift": self.diag_drift,
            "loss": self.loss,
            "root_loss": self.root_loss,
            "lambda": self.lam.tolist(),
        }


class RtolPoint(BaseModel):
    rtol: float
    loss: float
    root_loss: float
    iterations: int


# ---------------------------------------------------------------------------
# Factorizations
# ---------------------------------------------------------------------------


class StreamingFactorization(_ArrayModel):
    s: np.ndarray
    w: np.ndarray
    h: np.ndarray


class TreeMatrix(_ArrayModel):
    k: int
    matrix: np.ndarray
    node_leaf_ranges: list[tuple[int, int]]

    @cached_property
    def node_index(self) -> dict[tuple[int, int], int]:
        return {leaves: row for row, leaves in enumerate(self.node_leaf_ranges)}


class TreeFactorization(_ArrayModel):
    kind: Literal["vanilla", "honaker_full", "honaker_below"]
    n: int
    w: np.ndarray
    h: np.ndarray


class StructuredW(_ArrayModel):
    """W approximated as (A·Bᵀ)⊙M + band, M covering every entry with i − j ≥ d."""

    n: int
    d: int
    r: int
    band: np.ndarray
    a: np.ndarray
    b: np.ndarray

    @property
    def mask(self) -> np.ndarray:
        return np.tril(np.ones((self.n, self.n)), k=-self.d)


class AlsFit(_ArrayModel):
    a: np.ndarray
    b: np.ndarray
    objective: list[float]


class NoiseStreamState(_ArrayModel):
    beta: np.ndarray
    step: int = 0
    recent_noise: list = Field(default_factory=list)
    last_multiplies: int = 0


# ---------------------------------------------------------------------------
# Privacy
# ---------------------------------------------------------------------------


class PrivacyParams(BaseModel):
    epsilon: float = Field(gt=0)
    delta: float = Field(gt=0, lt=1)
    zeta: float = Field(gt=0)
    gamma: float = Field(gt=0)

    @computed_field
    @property
    def sigma(self) -> float:
        from src.dppf.dp_mechanism import calibrate_sigma

        return calibrate_sigma(self.gamma, self.zeta, self.epsilon, self.delta)


class AdjacencySet(BaseModel):
    """Which input differences count as neighbouring datasets.

    Deltas differ in at most a few positions; every nonzero entry is bounded
    by ``zeta``. The structure of the allowed supports depends on ``kind``.
    """

    kind: Literal["singletons", "explicit", "k_participations", "min_gap", "fixed_windows"]
    n: int = Field(ge=1)
    zeta: float = Field(default=1.0, gt=0)
    deltas: Optional[list[list[float]]] = None
    k: Optional[int] = Field(default=None, ge=1)
    tau: Optional[int] = Field(default=None, ge=1)
    window: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode="after")
    def _check_kind_params(self) -> "AdjacencySet":
        required = {
            "explicit": "deltas",
            "k_participations": "k",
            "min_gap": "tau",
            "fixed_windows": "window",
        }
        name = required.get(self.kind)
        if name is not None and getattr(self, name) is None:
            raise ValueError(f"adjacency kind {self.kind!r} needs {name!r}")
        if self.deltas is not None:
            for delta in self.deltas:
                if len(delta) != self.n:
                    raise ValueError(f"explicit delta has length {len(delta)}, expected {self.n}")
                if max((abs(v) for v in delta), default=0.0) > self.zeta:
                    raise ValueError(f"explicit delta has an entry larger than zeta={self.zeta}")
        return self

    @classmethod
    def singletons(cls, n: int, zeta: float = 1.0) -> "AdjacencySet":
        return cls(kind="singletons", n=n, zeta=zeta)

    @classmethod
    def explicit(cls, deltas: list[list[float]], zeta: float = 1.0) -> "AdjacencySet":
        return cls(kind="explicit", n=len(deltas[0]), zeta=zeta, deltas=deltas)

    @classmethod
    def k_participations(cls, n: int, k: int, zeta: float = 1.0) -> "AdjacencySet":
        return cls(kind="k_participations", n=n, k=k, zeta=zeta)

    @classmethod
    def min_gap(cls, n: int, tau: int, zeta: float = 1.0) -> "AdjacencySet":
        return cls(kind="min_gap", n=n, tau=tau, zeta=zeta)

    @classmethod
    def fixed_windows(cls, n: int, window: int, zeta: float = 1.0) -> "AdjacencySet":
        return cls(kind="fixed_windows", n=n, window=window, zeta=zeta)


class MechanismRun(_ArrayModel):
    releases: np.ndarray
    true_prefix: np.ndarray
    noise_used: np.ndarray
    noise_component: np.ndarray
    seed: int


class MonteCarloReport(_ArrayModel):
    replicates: int
    sigma: float
    mean_total_sq_error: float
    per_step_variance: np.ndarray


# ---------------------------------------------------------------------------
# Bounds and benchmark records
# ---------------------------------------------------------------------------


class SpectrumReport(BaseModel):
    n: int
    singular_values: list[float]
    odd_sum: float
    lower_bound: float
    # undefined below n = 2, where ln n vanishes
    analytic_log_bound: Optional[float] = None


class TableRow(BaseModel):
    n: int
    honaker: Optional[float] = None
    optimal: Optional[float] = None
    efficient: Optional[float] = None
    d: Optional[int] = None
    r: Optional[int] = None
    lower_bound: Optional[float] = None


class BenchRun(BaseModel):
    """Audit record written next to every command's outputs."""

    command: str
    params: dict = Field(default_factory=dict)
    status: Literal["running", "success", "failed"] = "running"
    files: list[str] = Field(default_factory=list)
    error_message: Optional[str] = None
