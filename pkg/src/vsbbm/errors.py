"""Exception hierarchy shared by all modules."""


class VsbbmError(Exception):
    """Base class for every error raised by this package."""


class DomainError(VsbbmError, ValueError):
    """An argument lies outside the domain of the operation."""


class ConstructionError(VsbbmError, ValueError):
    """A derived object (e.g. a sandwich profile) cannot be built."""


class PreconditionError(VsbbmError, ValueError):
    """Inputs are well-formed but do not carry what the operation needs."""


class ResourceError(VsbbmError, RuntimeError):
    """A configured resource cap (population, memory) was exceeded."""


class NumericalError(VsbbmError, ArithmeticError):
    """A numerical scheme produced values outside its admissible range."""


class EstimationError(VsbbmError, RuntimeError):
    """A statistical estimate could not be formed; carries diagnostics."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
