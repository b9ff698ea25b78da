"""Exception types raised across the package."""


class VrGlitchError(Exception):
    """Base class for all package errors."""


class ResolutionError(VrGlitchError, ValueError):
    """Time step too coarse for the waveform or switching schedule."""


class ConfigurationError(VrGlitchError, ValueError):
    """Invalid or inconsistent configuration."""


class SimulationError(VrGlitchError, ArithmeticError):
    """Numerical failure inside the switched-network integrator."""


class NonConvergenceError(SimulationError):
    """Output rail left the physically admissible range."""


class TransientWindowError(VrGlitchError, ValueError):
    """No steady-state window is available where one is required."""


class InfeasibleError(VrGlitchError, ValueError):
    """Operating-point search found no acceptable point.

    The best point found is still attached as ``best`` so callers can
    inspect how far off it is.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class WindowError(VrGlitchError, ValueError):
    """Evaluation window lies outside the trace or is empty."""
