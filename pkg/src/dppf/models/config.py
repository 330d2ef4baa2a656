from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, Field, model_validator

from src.dppf import settings


class ToleranceConfig(BaseModel):
    sym_tol: float = Field(default=settings.SYM_TOL, gt=0)
    eig_clamp: float = Field(default=settings.EIG_CLAMP, ge=0)
    # None means rows x machine epsilon
    rcond: Optional[float] = Field(default=None, gt=0)


class SolverConfig(BaseModel):
    rtol: float = Field(default=settings.SOLVER_RTOL, gt=0)
    max_iter: int = Field(default=settings.SOLVER_MAX_ITER, ge=1)
    init: Literal["ones", "random"] = "ones"
    seed: int = 0


class AlsConfig(BaseModel):
    reg: float = Field(default=settings.ALS_REG, ge=0)
    sweeps: int = Field(default=settings.ALS_SWEEPS, ge=1)
    seed: int = 0
    init_scale: float = Field(default=settings.ALS_INIT_SCALE, gt=0)


class BenchConfig(BaseModel):
    """Settings shared by every CLI command.

    Loaded from a JSON file with ``--config``; explicit flags win.
    """

    sizes: list[int] = Field(default_factory=lambda: list(settings.TABLE_SIZES))
    rtol: float = Field(default=settings.SOLVER_RTOL, gt=0)
    max_iter: int = Field(default=settings.SOLVER_MAX_ITER, ge=1)
    dr_pairs: list[tuple[int, int]] = Field(default_factory=list)
    epsilon: float = Field(default=1.0, gt=0)
    delta: float = Field(default=1e-6, gt=0, lt=1)
    zeta: float = Field(default=1.0, gt=0)
    seed: int = 0
    jobs: int = Field(default=1, ge=1)
    out_dir: Path = Field(default_factory=settings.default_out_dir)
    als: AlsConfig = Field(default_factory=AlsConfig)

    @model_validator(mode="after")
    def _check_sizes(self) -> "BenchConfig":
        if not self.sizes:
            raise ValueError("sizes must not be empty")
        if any(n < 1 for n in self.sizes):
            raise ValueError("every size must be a positive integer")
        if self.dr_pairs and len(self.dr_pairs) != len(self.sizes):
            raise ValueError("dr_pairs must be aligned with sizes")
        return self

    def solver_config(self) -> SolverConfig:
        return SolverConfig(rtol=self.rtol, max_iter=self.max_iter)
