class UnsupportedCapabilityError(NotImplementedError):
    """Raised when an object lacks a capability (CF, spatial evaluation, ...)."""


class QuadratureError(RuntimeError):
    """Numerical integration did not reach the requested tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message if residual is None else f"{message} (residual estimate {residual:.3e})")
        self.residual = residual


class SolverError(RuntimeError):
    pass
