"""Exception hierarchy shared by all schwarzlin modules."""


class SchwarzlinError(Exception):
    """Base class for every error raised by this package."""


class InvalidMeshError(SchwarzlinError, ValueError):
    pass


class IncompatibleMeshesError(SchwarzlinError, ValueError):
    pass


class NumericOverflowError(SchwarzlinError, OverflowError):
    """A nonlinearity evaluation left the representable range."""

    def __init__(self, message, vertex=None):
        super().__init__(message)
        self.vertex = vertex


class UnsupportedOperationError(SchwarzlinError, NotImplementedError):
    pass


class ConvexityViolationError(SchwarzlinError, ArithmeticError):
    pass


class ColoringViolationError(SchwarzlinError, ValueError):
    pass


class CoveringError(SchwarzlinError, RuntimeError):
    pass


class MissingCoarseLevelError(SchwarzlinError, ValueError):
    pass


class LineSearchFailure(SchwarzlinError, RuntimeError):
    pass


class MaxIterationsError(SchwarzlinError, RuntimeError):
    pass


class AlgorithmicRegressionError(SchwarzlinError, RuntimeError):
    """The outer iteration increased the energy."""


class SubdomainSolveError(SchwarzlinError, RuntimeError):
    def __init__(self, subdomain, cause):
        super().__init__(f"subdomain {subdomain}: {cause}")
        self.subdomain = subdomain
        self.cause = cause


class InsufficientDataError(SchwarzlinError, ValueError):
    pass


class ConfigError(SchwarzlinError, ValueError):
    """Malformed or inconsistent experiment configuration."""


class ExperimentError(SchwarzlinError, RuntimeError):
    """A run failed; the message carries the resolved configuration."""
