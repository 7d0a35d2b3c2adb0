"""Exception types shared across the package."""


class FuzzStochError(Exception):
    """Base class for all domain errors raised by this package."""


class PackingFailure(FuzzStochError):
    pass


class DimensionMismatch(FuzzStochError, ValueError):
    pass


class FormatError(FuzzStochError, ValueError):
    pass


class LabelError(FuzzStochError, ValueError):
    pass


class DegenerateVariance(FuzzStochError, ValueError):
    """Zero sample variance where a normalized statistic was requested."""


class DivisionByZeroInterval(FuzzStochError, ZeroDivisionError):
    pass


class FitFailure(FuzzStochError):
    """A least-squares membership branch came out with the wrong slope sign."""


class EigenFailure(FuzzStochError):
    pass


class DomainError(FuzzStochError, ValueError):
    pass


class InfeasibleMoments(FuzzStochError, ValueError):
    """Skewness/kurtosis pair outside the region reachable by a beta law."""


class WindowTooLarge(FuzzStochError, ValueError):
    pass


class NoRve(FuzzStochError):
    """No candidate length met the RVE tolerance; ``report`` holds the curve."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class DegenerateDenominator(FuzzStochError, ZeroDivisionError):
    pass


class ConfigError(FuzzStochError, ValueError):
    pass


class MissingArtifact(FuzzStochError, FileNotFoundError):
    pass
