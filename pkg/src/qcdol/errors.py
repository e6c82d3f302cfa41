"""Exception types raised by the numerical pipeline."""


class DivergenceError(ArithmeticError):
    """A fixed-step integration produced a non-finite state."""

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"non-finite state encountered at step {step}")


class GridError(ValueError):
    """A requested time is not on the grid (or two grids do not nest)."""


class ReferenceAccuracyError(ArithmeticError):
    """The reference trajectory failed its self-consistency validation."""

    def __init__(self, achieved, tolerance):
        self.achieved = achieved
        self.tolerance = tolerance
        super().__init__(
            f"reference trajectory error estimate {achieved:.3e} exceeds tolerance {tolerance:.3e}"
        )


class QuadratureError(ArithmeticError):
    """Grid-halving estimate of a quadrature did not meet its tolerance."""


class InsufficientDataError(ValueError):
    """Too few usable points for a fit."""


class ConfigError(ValueError):
    """Invalid run configuration."""
