"""Concrete operators: prefix sums, binary-tree measurements, the exchange matrix."""

from __future__ import annotations

import numpy as np

from src.dppf import settings
from src.dppf.errors import DimensionMismatch, UnsupportedSize
from src.dppf.models import TreeMatrix


def _require_positive(n: int, name: str = "n") -> int:
    if int(n) != n or n < 1:
        raise ValueError(f"{name} must be a positive integer, got {n!r}")
    return int(n)


def prefix_sum_matrix(n: int) -> np.ndarray:
    """Lower-triangular all-ones S(n): (S·x)_t = x_1 + ... + x_t."""
    n = _require_positive(n)
    return np.tril(np.ones((n, n)))


def _post_order_ranges(first: int, size: int) -> list[tuple[int, int]]:
    if size == 1:
        return [(first, first)]
    half = size // 2
    return (
        _post_order_ranges(first, half)
        + _post_order_ranges(first + half, half)
        + [(first, first + size - 1)]
    )


def tree_matrix(k: int) -> TreeMatrix:
    """Binary-tree measurement matrix M_k with 2^k − 1 nodes over 2^(k−1) leaves.

    Rows are in post-order (left subtree, right subtree, root), so every
    subtree occupies a contiguous block of rows ending with its root.
    """
    k = _require_positive(k, "k")
    n = 2 ** (k - 1)
    ranges = _post_order_ranges(0, n)
    matrix = np.zeros((len(ranges), n))
    for row, (lo, hi) in enumerate(ranges):
        matrix[row, lo : hi + 1] = 1.0
    return TreeMatrix(k=k, matrix=matrix, node_leaf_ranges=ranges)


def tree_levels_for(n: int) -> int:
    """k such that n = 2^(k−1); raises UnsupportedSize otherwise."""
    n = _require_positive(n)
    if n & (n - 1):
        raise UnsupportedSize(f"n={n} is not a power of two")
    return n.bit_length()


def antidiagonal(n: int) -> np.ndarray:
    """Exchange matrix P (ones on the anti-diagonal); P = Pᵀ = P⁻¹."""
    n = _require_positive(n)
    return np.eye(n)[::-1].copy()


def last_nonzero_columns(h: np.ndarray, tol: float = settings.ZERO_TOL) -> np.ndarray:
    """Per row of h, the index of its last entry above tol in magnitude (−1 if none)."""
    nonzero = np.abs(np.asarray(h, dtype=float)) > tol
    last = h.shape[1] - 1 - np.argmax(nonzero[:, ::-1], axis=1)
    return np.where(nonzero.any(axis=1), last, -1)


def is_streaming_pair(w: np.ndarray, h: np.ndarray, tol: float = settings.ZERO_TOL) -> bool:
    """True iff every measurement W uses at round t depends only on x_1..x_t."""
    w = np.asarray(w, dtype=float)
    h = np.asarray(h, dtype=float)
    if w.ndim != 2 or h.ndim != 2 or w.shape[1] != h.shape[0] or h.shape[1] != w.shape[0]:
        raise DimensionMismatch(
            f"w {w.shape} and h {h.shape} do not form an n x d / d x n pair"
        )
    last = last_nonzero_columns(h, tol)
    rounds = np.arange(w.shape[0])[:, None]
    used = np.abs(w) > tol
    return not bool(np.any(used & (last[None, :] > rounds)))
