"""Exception hierarchy for the localvol package."""


class LocalVolError(Exception):
    """Base class for all package errors."""


class GridError(LocalVolError):
    """Invalid grid construction or mismatched grids."""


class ValidationError(LocalVolError):
    """Domain-object or input-file invariant violated."""


class ConfigError(ValidationError):
    """Run configuration file is malformed or inconsistent."""


class SingularSystemError(LocalVolError):
    """Tridiagonal time-step system is singular; never silently regularized."""


class TruncationError(LocalVolError):
    """Spatial truncation too small for the requested strike/spot."""


class CurvatureError(LocalVolError):
    """Price curvature in strike nonpositive (butterfly arbitrage);
    the strike-space inversion denominator is unusable there."""

    def __init__(self, strikes, message=None):
        self.strikes = list(strikes)
        if message is None:
            message = f"nonpositive price curvature at strikes {self.strikes}"
        super().__init__(message)
