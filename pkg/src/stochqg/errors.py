"""Exception taxonomy shared across the package.

The CLI maps these onto process exit codes: configuration problems -> 1,
numerical divergence (including CFL aborts) -> 2, statistics that did not
converge -> 3.
"""


class StochQGError(Exception):
    """Base class for all package errors."""


class ConfigurationError(StochQGError):
    """Invalid parameter, grid, or config-file input."""


class StratificationError(ConfigurationError):
    """Density ordering violated (upper layer must be lighter)."""


class ForcingError(ConfigurationError):
    """Forcing field violates its contract (e.g. nonzero mean)."""


class GridMismatchError(ConfigurationError):
    """Operands live on different grids."""


class DivergenceError(StochQGError):
    """Trajectory left the trusted numerical regime."""

    def __init__(self, message: str, time: float | None = None):
        super().__init__(message)
        self.time = time


class CFLViolationError(DivergenceError):
    """Advective CFL bound violated at a check point."""


class StatisticsError(StochQGError):
    """A Monte-Carlo estimate failed its convergence requirement."""
