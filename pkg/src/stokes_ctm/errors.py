"""Exception types shared across the package."""


class GridError(ValueError):
    """Grid or geometry parameters are inadmissible."""


class AdmissibilityError(ValueError):
    """A horizon or kernel parameter violates a hard constraint."""


class ControlTimeError(RuntimeError):
    """Observability Gramian is numerically singular for the requested horizon."""


class ConvergenceError(RuntimeError):
    """An iterative solver hit its iteration cap.

    The last residual is kept on ``residual`` so callers can report it.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ConfigError(ValueError):
    """Experiment configuration is malformed or violates a constraint."""
