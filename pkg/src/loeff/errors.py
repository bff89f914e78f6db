"""Exception hierarchy shared by the library and the command line."""


class LoeffError(Exception):
    """Base class for all package errors."""


class ConfigurationError(LoeffError, ValueError):
    """Invalid input: bad shapes, out-of-range parameters, schema problems."""


class DimensionGuardError(ConfigurationError):
    """The truncated Hilbert space would exceed the configured dimension guard."""


class NumericalError(LoeffError, ArithmeticError):
    """A computation could not be carried out to the required accuracy."""


class NumericallySingularError(NumericalError):
    """The inverse loss channel overflows at the requested transmissivity."""


class ImpossibleOutcomeError(NumericalError):
    """A postselected outcome has probability below the configured floor."""


class InfeasibleStateError(NumericalError):
    """The target is not a valid state, so no loss representation exists."""
