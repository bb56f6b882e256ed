"""
Errors - Exception hierarchy shared by the solver components.
"""
from typing import Any, Optional


class MgaMsgdError(Exception):
    """Base class for all solver errors."""


class ConfigurationError(MgaMsgdError, ValueError):
    """Invalid configuration, unknown keys, missing files or shape mismatches."""


class DomainError(MgaMsgdError, ValueError):
    """Mathematical input outside the admissible domain."""


class EvaluationError(MgaMsgdError, ArithmeticError):
    """
    A loss evaluated to a non-finite value.

    Attributes:
        term: Name of the offending loss term
        value: The offending value
    """

    def __init__(self, message: str, term: str = "mse", value: Optional[float] = None):
        super().__init__(message)
        self.term = term
        self.value = value


class DivergenceError(MgaMsgdError):
    """A descent step was refused because the gradient is not finite."""


class TrainingAbortedError(MgaMsgdError):
    """
    A training phase failed irrecoverably.

    Attributes:
        trace: Partial training trace collected before the failure
    """

    def __init__(self, message: str, trace: Any = None):
        super().__init__(message)
        self.trace = trace


class CheckpointError(MgaMsgdError, IOError):
    """A checkpoint file is corrupt or does not match its header."""


class SensitivityError(MgaMsgdError):
    """A sensitivity sweep produced too few valid samples."""
