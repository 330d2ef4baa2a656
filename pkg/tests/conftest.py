from functools import lru_cache

import pytest

from src.dppf import bench
from src.dppf.models import SolverConfig


def pytest_addoption(parser):
    parser.addoption(
        "--slow",
        action="store_true",
        default=False,
        help="Also run multi-minute checks (n >= 2048 table rows, prefect flow)",
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--slow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@lru_cache(maxsize=None)
def _solved(n: int, rtol: float):
    return bench.optimal_factorization(n, SolverConfig(rtol=rtol))


@pytest.fixture(scope="session")
def solved():
    """Cached (FixedPointResult, StreamingFactorization) for S(n), keyed by (n, rtol)."""

    def get(n: int, rtol: float = 1e-5):
        return _solved(n, rtol)

    return get
