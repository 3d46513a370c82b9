class ValidationError(ValueError):
    """Raised for malformed demands, traffic classes or scenario configs."""


class ConvergenceError(RuntimeError):
    """The multiplier iteration did not reach the KKT tolerance."""

    def __init__(self, message, residual=float("nan"), iterations=0, time=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
        self.time = time
