"""Exception types shared across the package."""


class WqedError(Exception):
    pass


class ConfigError(WqedError, ValueError):
    """Invalid physical or scenario input."""


class GridCoverageError(WqedError):
    """Momentum grid misses part of the initial-state norm."""


class ConvergenceError(WqedError):
    """A long-time limit or refinement check did not settle."""


class ResolutionError(WqedError):
    """Discretized mode spacing too coarse for the pulse."""
