"""Exception hierarchy shared by every module of the toolkit."""

from __future__ import annotations

__all__ = [
    "MHError",
    "ExpressionError",
    "UnknownNameError",
    "DomainError",
    "ParameterError",
    "InvalidFunctionError",
    "ConvergenceError",
    "InvalidPolynomialError",
    "DecompositionError",
    "InvalidSymbolError",
    "RankError",
    "KernelError",
    "ConstructionError",
    "ResourceError",
]


class MHError(Exception):
    """Base class for toolkit errors."""


class ExpressionError(MHError, ValueError):
    """Syntax error in a function expression.

    ``position`` is the 0-based character offset; ``line`` and ``column``
    are 1-based.
    """

    def __init__(self, message: str, source: str = "", position: int = 0):
        self.source = source
        self.position = position
        before = source[:position]
        self.line = before.count("\n") + 1
        self.column = position - (before.rfind("\n") + 1) + 1
        super().__init__(f"{message} (line {self.line}, column {self.column})")


class UnknownNameError(ExpressionError, NameError):
    """An identifier that the grammar does not define."""


class DomainError(MHError, ValueError):
    """A value fell outside the domain where it is finite."""

    def __init__(self, message: str, index: tuple | None = None):
        self.index = index
        super().__init__(message if index is None else f"{message} at node {index}")


class ParameterError(MHError, ValueError):
    """An argument violates an operation's precondition."""


class InvalidFunctionError(MHError, ValueError):
    """A growth function violates its structural assumptions."""


class ConvergenceError(MHError, RuntimeError):
    """An iterative solver did not converge."""


class InvalidPolynomialError(MHError, ValueError):
    """A polynomial is not homogeneous or not harmonic."""


class DecompositionError(MHError, RuntimeError):
    """A spherical-harmonic projection did not reproduce its target."""


class InvalidSymbolError(MHError, ValueError):
    """A multiplier symbol is unbounded or non-finite."""


class RankError(MHError, ValueError):
    """The rank condition required by an experiment fails."""


class KernelError(MHError, ValueError):
    """A convolution kernel is not normalized or not certified."""


class ConstructionError(MHError, RuntimeError):
    """An object could not be constructed from the given parameters."""


class ResourceError(MHError, MemoryError):
    """A request exceeds the configured memory budget."""
