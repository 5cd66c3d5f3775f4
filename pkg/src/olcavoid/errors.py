"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """An argument broke a documented precondition (shape, range, simplex...)."""


class ReconstructionUnavailable(RuntimeError):
    """The disturbance map is not square/invertible, so w_t cannot be recovered."""


class StabilizationFailed(RuntimeError):
    """Riccati iteration did not converge or the closed loop is not stable."""


class SolverFailure(RuntimeError):
    """The trust-region secular equation did not converge."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class ConfigError(ValueError):
    """A run configuration file is malformed or inconsistent."""
