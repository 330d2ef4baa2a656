"""Binary-tree baselines over the measurements M_k.

``vanilla`` sums the roots of the dyadic blocks covering x_1..x_t.
``honaker_full`` is the least-norm W for all of M_k (not streaming).
``honaker_below`` is the streaming variant: row t is the least-norm
combination of the nodes whose leaves lie in 1..t.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from src.dppf.linalg_core import cholesky, tri_solve_lower, tri_solve_upper
from src.dppf.loss import optimal_w
from src.dppf.models import TreeFactorization
from src.dppf.operators import prefix_sum_matrix, tree_matrix


def dyadic_blocks(t: int) -> list[tuple[int, int]]:
    """(first leaf, size) of the aligned dyadic blocks covering leaves 0..t−1."""
    if t < 1:
        raise ValueError(f"t must be a positive integer, got {t!r}")
    blocks = []
    start = 0
    for bit in range(t.bit_length() - 1, -1, -1):
        size = 1 << bit
        if t & size:
            blocks.append((start, size))
            start += size
    return blocks


@lru_cache(maxsize=None)
def _root_estimator(levels: int) -> np.ndarray:
    """Least-norm c with c·M = (1, ..., 1), for M = tree_matrix(levels).

    M has full column rank, so c = M·(MᵀM)⁻¹·1.
    """
    m = tree_matrix(levels).matrix
    ones = np.ones(m.shape[1])
    factor = cholesky(m.T @ m)
    y = tri_solve_upper(factor.T, tri_solve_lower(factor, ones))
    c = m @ y
    c.flags.writeable = False
    return c


def vanilla_w(k: int) -> TreeFactorization:
    tree = tree_matrix(k)
    n = tree.matrix.shape[1]
    w = np.zeros((n, tree.matrix.shape[0]))
    for row in range(n):
        for start, size in dyadic_blocks(row + 1):
            w[row, tree.node_index[(start, start + size - 1)]] = 1.0
    return TreeFactorization(kind="vanilla", n=n, w=w, h=tree.matrix)


def honaker_full(k: int) -> TreeFactorization:
    tree = tree_matrix(k)
    n = tree.matrix.shape[1]
    w = optimal_w(prefix_sum_matrix(n), tree.matrix)
    return TreeFactorization(kind="honaker_full", n=n, w=w, h=tree.matrix)


def honaker_below(k: int) -> TreeFactorization:
    """Streaming least-norm estimator.

    The nodes below t split into one complete subtree per dyadic block of t,
    so each row is a concatenation of per-block root estimators placed on the
    subtree's (contiguous, post-order) rows.
    """
    tree = tree_matrix(k)
    n = tree.matrix.shape[1]
    w = np.zeros((n, tree.matrix.shape[0]))
    for row in range(n):
        for start, size in dyadic_blocks(row + 1):
            root = tree.node_index[(start, start + size - 1)]
            weights = _root_estimator(size.bit_length())
            w[row, root - weights.size + 1 : root + 1] = weights
    return TreeFactorization(kind="honaker_below", n=n, w=w, h=tree.matrix)


def per_step_variance(w: np.ndarray, sigma: float) -> np.ndarray:
    """Variance of each release when every measurement gets N(0, σ²) noise."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma!r}")
    w = np.asarray(w, dtype=float)
    return sigma**2 * np.sum(w * w, axis=1)
