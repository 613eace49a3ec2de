"""Exception types shared across the solvers."""


class NumericalError(RuntimeError):
    """Raised when a solver fails numerically (underflow, divergence, ...).

    Carries an optional ``trace`` attribute with per-iteration objective
    values recorded up to the failure.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else None
