import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()

PROJECT_NAME = "dppf"

# Numerical tolerances shared by linalg_core and the structural checks
SYM_TOL = 1e-10
EIG_CLAMP = 1e-12
ZERO_TOL = 1e-12
FACTORIZATION_RTOL = 1e-6
RESIDUAL_TINY = 1e-300

# Fixed-point solver defaults
SOLVER_RTOL = 1e-5
SOLVER_MAX_ITER = 10_000
SOLVER_LOG_EVERY = 25
# residuals this small are rounding noise; the contraction estimate is not trusted there
SOLVER_RESIDUAL_FLOOR = 1e-14

# Alternating least squares defaults for the banded + low-rank fit
ALS_REG = 1e-6
ALS_SWEEPS = 50
ALS_INIT_SCALE = 0.1

# Brute-force sensitivity enumeration cap (support x sign-vertex candidates)
MAX_BRUTE_FORCE_CANDIDATES = 2**24
QUADRATIC_FORM_SLACK = 1e-9

# Monte Carlo batches never hold more than this many noise draws at once
MONTE_CARLO_BATCH = 4096

# Loss table rows: default sizes, --slow sizes and the (d, r) used for each size
TABLE_SIZES = [256, 512, 1024]
SLOW_TABLE_SIZES = [2048, 4096]
TABLE_DR_PAIRS = {
    256: (4, 4),
    512: (5, 4),
    1024: (5, 5),
    2048: (6, 5),
    4096: (6, 6),
}
RTOL_SWEEP = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8]

# CLI exit codes
EXIT_OK = 0
EXIT_IO = 1
EXIT_NO_CONVERGENCE = 2
EXIT_USAGE = 64
EXIT_DATA = 65

# Environment overrides (read at call time so tests can monkeypatch them)
OUT_DIR_ENV = "DPPF_OUT_DIR"
LOG_LEVEL_ENV = "DPPF_LOG_LEVEL"


def default_out_dir() -> Path:
    return Path(os.environ.get(OUT_DIR_ENV, "results"))


def log_level() -> str:
    return os.environ.get(LOG_LEVEL_ENV, "INFO").upper()
