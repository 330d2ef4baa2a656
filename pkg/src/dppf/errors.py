"""Exception hierarchy for dppf.

Library code raises these; only the CLI turns them into exit codes.
"""

from __future__ import annotations

import numpy as np


class DPPFError(Exception):
    """Base class for every error raised by dppf."""


# ---------------------------------------------------------------------------
# Linear algebra
# ---------------------------------------------------------------------------


class DimensionMismatch(DPPFError, ValueError):
    pass


class NotSymmetric(DPPFError, ValueError):
    pass


class NotPositiveDefinite(DPPFError, ArithmeticError):
    pass


class NotPSD(DPPFError, ArithmeticError):
    pass


class SingularMatrix(DPPFError, ArithmeticError):
    pass


# ---------------------------------------------------------------------------
# Factorizations
# ---------------------------------------------------------------------------


class InfeasibleFactorization(DPPFError, ValueError):
    """The row space of H does not contain the row space of S."""


class NonFactorization(DPPFError, ValueError):
    """W·H does not reproduce S, or no measurement can be assigned to a round."""


class NotOnline(DPPFError, ValueError):
    """W uses a measurement before H can produce it."""


class SingularS(DPPFError, ArithmeticError):
    pass


class NonPositiveInput(DPPFError, ValueError):
    pass


class UnsupportedSize(DPPFError, ValueError):
    """Binary-tree constructions need n to be a power of two."""


class NoConvergence(DPPFError):
    """The fixed-point iteration hit its iteration cap.

    Carries the last iterate so callers can inspect or resume from it.
    """

    def __init__(self, last_iterate: np.ndarray, residual: float, iterations: int):
        self.last_iterate = last_iterate
        self.residual = residual
        self.iterations = iterations
        super().__init__(
            f"no convergence after {iterations} iterations (residual={residual:.3e})"
        )


# ---------------------------------------------------------------------------
# Streaming and privacy
# ---------------------------------------------------------------------------


class StreamExhausted(DPPFError):
    pass


class InvalidPrivacyParams(DPPFError, ValueError):
    pass


class InputOutOfRange(DPPFError, ValueError):
    pass


class TooLargeForBruteForce(DPPFError, ValueError):
    def __init__(self, candidates: int, limit: int):
        self.candidates = candidates
        self.limit = limit
        super().__init__(f"{candidates} candidate deltas exceed the limit of {limit}")
