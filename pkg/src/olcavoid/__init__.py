"""Online obstacle avoidance with disturbance-action policies and trust-region oracles."""

from .errors import (ConfigError, ContractViolation, ReconstructionUnavailable,
                     SolverFailure, StabilizationFailed)

__all__ = ["ConfigError", "ContractViolation", "ReconstructionUnavailable",
           "SolverFailure", "StabilizationFailed"]
__version__ = "0.1.0"
