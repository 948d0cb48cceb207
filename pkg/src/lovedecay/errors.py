"""Exception hierarchy shared across the package."""


class LoveDecayError(Exception):
    """Base class for all package errors."""


class NonIntegrableKernelError(LoveDecayError):
    """The memory kernel has infinite mass."""


class DomainError(LoveDecayError, ValueError):
    """A function was evaluated outside its domain."""


class UnsupportedConjugateError(LoveDecayError):
    """The Young conjugate is undefined for this modulus (H' not invertible)."""


class MissingHistoryError(LoveDecayError):
    """The history buffer does not cover the requested interval."""


class OrderingError(LoveDecayError, ValueError):
    """A record was pushed with a non-increasing timestamp."""


class UnsupportedManufacturedCaseError(LoveDecayError):
    """The manufactured solution has no closed-form memory convolution."""


class DivergenceError(LoveDecayError, FloatingPointError):
    """Non-finite values appeared during time stepping."""

    def __init__(self, step, t, message=None):
        self.step = step
        self.t = t
        super().__init__(message or f"non-finite state at step {step} (t={t:.6g})")


class EquivalenceUndefinedError(LoveDecayError):
    """L/E is undefined because E vanished where L did not."""


class UndefinedScalingError(LoveDecayError):
    """Ray scaling of the zero state is undefined."""


class PreconditionError(LoveDecayError, ValueError):
    """An operation was called outside its admissible parameter range."""


class ConfigError(LoveDecayError):
    """Malformed or inconsistent run configuration."""
