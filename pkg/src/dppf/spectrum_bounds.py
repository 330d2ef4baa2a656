"""Spectral lower bounds on the best achievable loss."""

from __future__ import annotations

import math

import numpy as np
from scipy import linalg

from src.dppf.errors import DimensionMismatch
from src.dppf.models import SpectrumReport
from src.dppf.operators import prefix_sum_matrix


def prefix_singular_values(n: int) -> np.ndarray:
    """Closed-form singular values of S(n), descending:
    σ_k = 1 / (2·sin((2k − 1)·π / (4n + 2)))."""
    if n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    k = np.arange(1, n + 1)
    return 1.0 / (2.0 * np.sin((2 * k - 1) * np.pi / (4 * n + 2)))


def _odd_sum(singular_values: np.ndarray) -> float:
    return float(np.sum(singular_values[::2]))


def generic_lower_bound(s: np.ndarray) -> float:
    """(σ₁ + σ₃ + σ₅ + ...)² / n for the singular values of s."""
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise DimensionMismatch(f"s must be square, got shape {s.shape}")
    n = s.shape[0]
    if np.array_equal(s, prefix_sum_matrix(n)):
        values = prefix_singular_values(n)
    else:
        values = linalg.svdvals(s)
    return _odd_sum(values) ** 2 / n


def prefix_log_bound(n: int) -> float:
    """Asymptotic n·(ln n)²/(4π²) form of the prefix-sum bound, for n ≥ 2."""
    if n < 2:
        raise ValueError(f"the log-form bound needs n >= 2, got {n!r}")
    return n * math.log(n) ** 2 / (4 * math.pi**2)


def spectrum_report(n: int) -> SpectrumReport:
    values = prefix_singular_values(n)
    odd_sum = _odd_sum(values)
    return SpectrumReport(
        n=n,
        singular_values=values.tolist(),
        odd_sum=odd_sum,
        lower_bound=odd_sum**2 / n,
        analytic_log_bound=prefix_log_bound(n) if n >= 2 else None,
    )
