"""Exception hierarchy shared by all modules."""


class BohmianHHGError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(BohmianHHGError, ValueError):
    """Invalid parameters or configuration file content."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ContractViolation(BohmianHHGError, ValueError):
    """A function was called with arguments outside its domain."""


class NumericalError(BohmianHHGError, RuntimeError):
    """Base for failures of a numerical procedure."""


class PropagationDiverged(NumericalError):
    pass


class ConvergenceError(NumericalError):
    pass


class IntegrationDiverged(NumericalError):
    pass


class DegenerateStateError(NumericalError):
    """Density too small on too much of the grid to define a velocity field."""
