"""Exception hierarchy shared by all modules."""


class MolBatteryError(Exception):
    """Base class for library errors."""


class ContractViolation(MolBatteryError, ValueError):
    """An input does not satisfy a documented precondition."""


class InputError(MolBatteryError, ValueError):
    """Malformed numerical input (shape mismatch, NaN, out of range)."""


class NumericalFailure(MolBatteryError, RuntimeError):
    """A solver did not reach its stated accuracy."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class NonErgodic(NumericalFailure):
    """Generator kernel has dimension larger than one."""

    def __init__(self, kernel_dim, **diagnostics):
        super().__init__(
            f"stationary state is not unique: kernel dimension {kernel_dim}",
            kernel_dim=kernel_dim,
            **diagnostics,
        )
        self.kernel_dim = kernel_dim


class TruncationError(MolBatteryError, ValueError):
    """Fock truncation too small for the requested state; raise N."""


class ResourceError(MolBatteryError, MemoryError):
    """Requested problem size exceeds the supported desk-scale limits."""


class ExtrapolationError(MolBatteryError, ValueError):
    """Tabulated data evaluated outside its sampled range."""


class InvariantViolation(MolBatteryError, ValueError):
    """A domain invariant (e.g. G(omega) >= 0) does not hold."""


class ConfigError(MolBatteryError, ValueError):
    """Scenario configuration could not be parsed or validated."""
