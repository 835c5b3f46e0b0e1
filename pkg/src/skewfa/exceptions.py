"""Exception types raised by skewfa."""

import numpy as np


class SkewFAError(Exception):
    """Base class for library errors."""


class DomainError(SkewFAError, ValueError):
    """An argument lies outside the domain of the operation."""


class FactorizationError(SkewFAError, np.linalg.LinAlgError):
    """A matrix that must be symmetric positive definite is not."""


class UnderflowError(SkewFAError, FloatingPointError):
    """A normalising probability is too small to represent."""


class DegenerateComponentError(SkewFAError):
    """A mixture component collapsed during fitting."""


class InitializationError(SkewFAError):
    """No admissible starting partition could be found."""


class FitAbortedError(SkewFAError):
    """Every attempted fit failed; ``causes`` lists the individual errors."""

    def __init__(self, message, causes=()):
        super().__init__(message)
        self.causes = list(causes)
