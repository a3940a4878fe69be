"""Exception hierarchy shared across the package."""


class SaepError(Exception):
    """Base class for all package-specific errors."""


class DomainError(SaepError, ValueError):
    """Argument outside the mathematical definition domain of a transform."""


class DegenerateMomentError(SaepError, ValueError):
    """A tilted density collapsed below representable variance."""


class NoAnalyticProfileError(SaepError, ValueError):
    """The requested ensemble has no closed-form spectral law."""


class NumericalFailureError(SaepError, RuntimeError):
    """A root-finder or factorization failed to converge."""


class DivergenceError(NumericalFailureError):
    """Solver state became non-finite or a tilted variance went negative."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class DegenerateStateError(NumericalFailureError):
    """A diagonal hit exact zero where a reciprocal is required."""


class InstabilityError(NumericalFailureError):
    """EP precision matrix lost positive definiteness."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration
