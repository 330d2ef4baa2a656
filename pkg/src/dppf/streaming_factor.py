"""Turning an optimal Gram matrix into a streaming (lower-triangular) factorization."""

from __future__ import annotations

import numpy as np
from loguru import logger

from src.dppf import settings
from src.dppf.errors import DimensionMismatch, NonFactorization, NotOnline
from src.dppf.linalg_core import (
    cholesky,
    max_column_norm,
    relative_residual,
    tri_solve_upper,
)
from src.dppf.loss import loss_of
from src.dppf.models import FixedPointResult, StreamingFactorization
from src.dppf.operators import is_streaming_pair, last_nonzero_columns

REDUCTION_RTOL = 1e-8


def psi(x: np.ndarray) -> np.ndarray:
    """Lower-triangular H with HᵀH = x.

    H = P·chol(P·x·P)ᵀ·P for the exchange matrix P; conjugating by P is a
    reversal of both axes, so it is done by flipping instead of multiplying.
    """
    x = np.asarray(x, dtype=float)
    factor = cholesky(x[::-1, ::-1])
    return np.ascontiguousarray(factor.T[::-1, ::-1])


def factorize_streaming(s: np.ndarray, result: FixedPointResult) -> StreamingFactorization:
    s = np.asarray(s, dtype=float)
    n = result.x_star.shape[0]
    if s.shape != (n, n):
        raise DimensionMismatch(f"s {s.shape} does not match x_star of size {n}")

    h = psi(result.x_star)
    # W·H = S  <=>  Hᵀ·Wᵀ = Sᵀ, and Hᵀ is upper-triangular
    w = np.tril(tri_solve_upper(h.T, s.T).T)

    report = loss_of(w, h)
    mismatch = abs(report.loss - result.loss) / max(result.loss, settings.RESIDUAL_TINY)
    if mismatch > settings.FACTORIZATION_RTOL:
        logger.warning(
            f"[streaming n={n}] factorized loss {report.loss:.6f} differs from "
            f"trace loss {result.loss:.6f} (relative {mismatch:.2e})"
        )
    return StreamingFactorization(s=s, w=w, h=h)


# ---------------------------------------------------------------------------
# Square reduction of a non-square streaming pair
# ---------------------------------------------------------------------------


def _rotate(w: np.ndarray, h: np.ndarray, j1: int, j2: int, t: int) -> None:
    alpha, beta = w[t, j1], w[t, j2]
    z = np.hypot(alpha, beta)
    if z == 0:
        return
    c, s = alpha / z, beta / z

    col1, col2 = w[:, j1].copy(), w[:, j2].copy()
    w[:, j1] = c * col1 + s * col2
    w[:, j2] = -s * col1 + c * col2
    w[t, j2] = 0.0

    row1, row2 = h[j1, :].copy(), h[j2, :].copy()
    h[j1, :] = c * row1 + s * row2
    h[j2, :] = -s * row1 + c * row2


def rotate_pair(
    w: np.ndarray, h: np.ndarray, j1: int, j2: int, t: int
) -> tuple[np.ndarray, np.ndarray]:
    """Givens-mix W-columns j1, j2 and H-rows j1, j2 so that w'[t, j2] = 0.

    W·H, ‖W‖_F and every column norm of H are unchanged.
    """
    w = np.array(w, dtype=float)
    h = np.array(h, dtype=float)
    if w.shape[1] != h.shape[0]:
        raise DimensionMismatch(f"w {w.shape} cannot multiply h {h.shape}")
    _rotate(w, h, j1, j2, t)
    return w, h


def reduce_to_square(w: np.ndarray, h: np.ndarray, s: np.ndarray) -> StreamingFactorization:
    """Square streaming factorization with the same ‖W‖_F and no larger Γ.

    Round by round, every measurement that is available by round t and still
    unassigned is folded into one by Givens rotations; that survivor becomes
    row t of the new H. Measurements never assigned end with all-zero W
    columns and are dropped.
    """
    w = np.array(w, dtype=float)
    h = np.array(h, dtype=float)
    s = np.asarray(s, dtype=float)
    n, d = w.shape
    if h.shape != (d, n) or s.shape != (n, n):
        raise DimensionMismatch(f"w {w.shape}, h {h.shape} and s {s.shape} do not fit together")

    residual = relative_residual(w @ h, s)
    if residual > REDUCTION_RTOL:
        raise NonFactorization(f"w·h does not reproduce s (relative residual {residual:.3e})")
    if not is_streaming_pair(w, h):
        raise NotOnline("w uses a measurement before h can release it")

    gamma_before = max_column_norm(h)
    last = last_nonzero_columns(h)
    assigned = np.zeros(d, dtype=bool)
    order: list[int] = []
    rotations = 0

    for t in range(n):
        available = ~assigned & (last <= t) & (np.abs(w[t]) > settings.ZERO_TOL)
        candidates = np.flatnonzero(available).tolist()
        if not candidates:
            raise NonFactorization(f"no measurement is available for round {t}")
        keep = candidates[0]
        for other in candidates[1:]:
            _rotate(w, h, keep, other, t)
            rotations += 1
        assigned[keep] = True
        order.append(keep)

    w_square = np.tril(w[:, order])
    h_square = np.tril(h[order, :])
    gamma_after = max_column_norm(h_square)
    logger.info(
        f"[reduce d={d}->n={n}] {rotations} rotations, "
        f"gamma {gamma_before:.6f} -> {gamma_after:.6f}"
    )
    return StreamingFactorization(s=s, w=w_square, h=h_square)
