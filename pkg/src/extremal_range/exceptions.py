"""Exception hierarchy.

Validation problems derive from ``ValueError``; numerical breakdowns
(non-convergent quadrature, failed factorizations, rejection samplers that
never accept) derive from ``ArithmeticError`` or ``RuntimeError`` so the CLI
can map them to distinct exit codes.
"""

import numpy as np


class ExtremalRangeError(Exception):
    """Base class for all package errors."""


class DomainError(ExtremalRangeError, ValueError):
    """Argument outside the domain of a function."""


class UnsupportedSmoothnessError(ExtremalRangeError, ValueError):
    """Matern smoothness without a closed form here."""


class GridSizeError(ExtremalRangeError, ValueError):
    """Grid exceeds the dense-covariance memory budget."""


class EstimationError(ExtremalRangeError, ValueError):
    """Estimator input is empty, degenerate, or lacks support."""


class ConfigError(ExtremalRangeError, ValueError):
    """Invalid experiment configuration."""


class NumericalError(ExtremalRangeError, ArithmeticError):
    """A numerical routine failed to reach its tolerance."""


class NotPositiveDefiniteError(ExtremalRangeError, np.linalg.LinAlgError):
    """Cholesky factorization failed even at the largest jitter."""


class ConditioningError(ExtremalRangeError, RuntimeError):
    """Exceedance conditioning needed too many rejection proposals."""
