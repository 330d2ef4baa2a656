"""Dense real linear-algebra kernels used by every other module.

All functions take and return float64 numpy arrays and never modify their
inputs. Failures surface as the typed errors in ``src.dppf.errors``.
"""

from __future__ import annotations

import numpy as np
from scipy import linalg

from src.dppf import settings
from src.dppf.errors import (
    DimensionMismatch,
    NotPositiveDefinite,
    NotPSD,
    NotSymmetric,
    SingularMatrix,
)
from src.dppf.models import ToleranceConfig

DEFAULT_TOLERANCES = ToleranceConfig()


def _as_matrix(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise DimensionMismatch(f"{name} must be a non-empty 2-D array, got shape {a.shape}")
    return a


def _require_square(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    a = _as_matrix(a, name)
    if a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {a.shape}")
    return a


def _require_symmetric(a: np.ndarray, tol: ToleranceConfig) -> np.ndarray:
    a = _require_square(a)
    scale = max(np.linalg.norm(a), settings.RESIDUAL_TINY)
    if np.linalg.norm(a - a.T) > tol.sym_tol * scale:
        raise NotSymmetric(f"matrix of shape {a.shape} is not symmetric within {tol.sym_tol:g}")
    return a


def relative_residual(a: np.ndarray, b: np.ndarray) -> float:
    """‖a − b‖_F / ‖b‖_F, with ‖b‖_F floored at a tiny positive value."""
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), settings.RESIDUAL_TINY))


def cholesky(a: np.ndarray, tol: ToleranceConfig = DEFAULT_TOLERANCES) -> np.ndarray:
    """Lower-triangular L with L·Lᵀ = a for symmetric positive definite a."""
    a = _require_symmetric(a, tol)
    try:
        factor = linalg.cholesky(a, lower=True, check_finite=True)
    except linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    if np.any(np.diag(factor) <= 0):
        raise NotPositiveDefinite("cholesky factor has a non-positive diagonal entry")
    return factor


def symmetric_sqrt_factors(
    a: np.ndarray, tol: ToleranceConfig = DEFAULT_TOLERANCES
) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (clamped to >= 0) and eigenvectors of a symmetric PSD matrix.

    Eigenvalues below ``-eig_clamp * max|eigenvalue|`` mean the input is not
    PSD. The square root is ``U @ diag(sqrt(w)) @ U.T``; its diagonal alone is
    ``(U**2) @ sqrt(w)``.
    """
    a = _require_symmetric(a, tol)
    w, u = linalg.eigh(a)
    scale = max(float(np.max(np.abs(w))), settings.RESIDUAL_TINY)
    if w[0] < -tol.eig_clamp * scale:
        raise NotPSD(f"smallest eigenvalue {w[0]:.3e} is below the clamp threshold")
    return np.clip(w, 0.0, None), u


def psd_sqrt(a: np.ndarray, tol: ToleranceConfig = DEFAULT_TOLERANCES) -> np.ndarray:
    """Unique symmetric PSD R with R·R = a."""
    w, u = symmetric_sqrt_factors(a, tol)
    r = (u * np.sqrt(w)) @ u.T
    return (r + r.T) / 2


def pinv(a: np.ndarray, tol: ToleranceConfig = DEFAULT_TOLERANCES) -> np.ndarray:
    """Moore-Penrose pseudoinverse via SVD.

    Singular values at or below ``rcond * sigma_max`` are treated as zero,
    with rcond defaulting to ``max(rows, cols) * machine epsilon``.
    """
    a = _as_matrix(a)
    rcond = tol.rcond if tol.rcond is not None else max(a.shape) * np.finfo(float).eps
    u, s, vt = linalg.svd(a, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return np.zeros((a.shape[1], a.shape[0]))
    keep = s > rcond * s[0]
    inv_s = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
    return (vt.T * inv_s) @ u.T


def _check_triangular_solve(t: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    t = _require_square(t, "triangular factor")
    b = np.asarray(b, dtype=float)
    if b.shape[0] != t.shape[0]:
        raise DimensionMismatch(f"right-hand side has {b.shape[0]} rows, expected {t.shape[0]}")
    if np.any(np.diag(t) == 0):
        raise SingularMatrix("triangular factor has a zero diagonal entry")
    return t, b


def tri_solve_lower(lower: np.ndarray, b: np.ndarray) -> np.ndarray:
    """X with lower·X = b by forward substitution."""
    lower, b = _check_triangular_solve(lower, b)
    return linalg.solve_triangular(lower, b, lower=True)


def tri_solve_upper(upper: np.ndarray, b: np.ndarray) -> np.ndarray:
    """X with upper·X = b by back substitution."""
    upper, b = _check_triangular_solve(upper, b)
    return linalg.solve_triangular(upper, b, lower=False)


def max_column_norm(h: np.ndarray) -> float:
    """Γ: the largest column ℓ₂ norm of h."""
    h = _as_matrix(h)
    return float(np.max(np.linalg.norm(h, axis=0)))
