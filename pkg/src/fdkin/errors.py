"""Package exception taxonomy, mapped to CLI exit codes."""


class FdkinError(Exception):
    """Base class for package errors."""


class ConfigurationError(FdkinError):
    """Invalid or inconsistent configuration (CLI exit code 1)."""


class NumericalError(FdkinError):
    """A numerical procedure failed to converge or left its domain
    (CLI exit code 2)."""


class DegenerateInputError(NumericalError):
    """Input data outside the operator's domain (vanishing mass,
    infeasible moments)."""
