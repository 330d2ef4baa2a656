"""Loss of a factorization S = W·H: Γ(H)²·‖W‖_F²."""

from __future__ import annotations

import numpy as np

from src.dppf import settings
from src.dppf.errors import DimensionMismatch, InfeasibleFactorization
from src.dppf.linalg_core import (
    cholesky,
    max_column_norm,
    pinv,
    relative_residual,
    tri_solve_lower,
    tri_solve_upper,
)
from src.dppf.models import LossReport


def loss_of(w: np.ndarray, h: np.ndarray) -> LossReport:
    w = np.asarray(w, dtype=float)
    h = np.asarray(h, dtype=float)
    if w.ndim != 2 or h.ndim != 2 or w.shape[1] != h.shape[0]:
        raise DimensionMismatch(f"w {w.shape} cannot multiply h {h.shape}")
    gamma = max_column_norm(h)
    frob_w_sq = float(np.sum(w * w))
    loss = gamma**2 * frob_w_sq
    return LossReport(gamma=gamma, frob_w_sq=frob_w_sq, loss=loss, root_loss=float(np.sqrt(loss)))


def _is_invertible_lower(h: np.ndarray) -> bool:
    return (
        h.shape[0] == h.shape[1]
        and not np.any(np.triu(h, k=1))
        and bool(np.all(np.diag(h) != 0))
    )


def optimal_w(s: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Minimum-Frobenius W with W·H = S, i.e. S·pinv(H).

    Invertible lower-triangular H takes the triangular-solve path.
    """
    s = np.asarray(s, dtype=float)
    h = np.asarray(h, dtype=float)
    if s.ndim != 2 or h.ndim != 2 or s.shape[1] != h.shape[1]:
        raise DimensionMismatch(f"s {s.shape} and h {h.shape} must have the same column count")
    if _is_invertible_lower(h):
        # W·H = S  <=>  Hᵀ·Wᵀ = Sᵀ
        w = tri_solve_upper(h.T, s.T).T
    else:
        w = s @ pinv(h)
    residual = relative_residual(w @ h, s)
    if residual > settings.FACTORIZATION_RTOL:
        raise InfeasibleFactorization(
            f"row space of h does not contain s (relative residual {residual:.3e})"
        )
    return w


def trace_loss(s: np.ndarray, x: np.ndarray) -> float:
    """tr(SᵀS·X⁻¹) computed as ‖L⁻¹Sᵀ‖_F² with X = L·Lᵀ."""
    s = np.asarray(s, dtype=float)
    x = np.asarray(x, dtype=float)
    if s.ndim != 2 or x.shape != (s.shape[1], s.shape[1]):
        raise DimensionMismatch(f"x {x.shape} does not match s {s.shape}")
    y = tri_solve_lower(cholesky(x), s.T)
    return float(np.sum(y * y))
