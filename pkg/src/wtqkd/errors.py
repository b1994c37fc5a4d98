"""Exception types raised across the package."""


class WtqkdError(Exception):
    """Base class for all package errors."""


class BelowThresholdError(WtqkdError, ValueError):
    pass


class NumericalInstabilityError(WtqkdError, FloatingPointError):
    """Integration produced a non-finite state."""

    def __init__(self, step: int, time_ps: float):
        self.step = step
        self.time_ps = time_ps
        super().__init__(f"non-finite laser state at step {step} (t = {time_ps:.3f} ps)")


class FitError(WtqkdError, RuntimeError):
    def __init__(self, message: str, residual: float = float("nan")):
        self.residual = residual
        super().__init__(f"{message} (residual={residual:.4g})")


class InsufficientDataError(WtqkdError, ValueError):
    pass


class DecoyEstimationError(WtqkdError, ValueError):
    """Decoy analysis could not certify any single-photon yield."""


class MalformedRecordError(WtqkdError, ValueError):
    pass


class NoLockError(WtqkdError, RuntimeError):
    pass


class ConfigError(WtqkdError, ValueError):
    """Schema violation in a configuration file.

    ``key`` is the dotted path of the offending entry.
    """

    def __init__(self, key: str, reason: str):
        self.key = key
        self.reason = reason
        super().__init__(f"{key}: {reason}")
