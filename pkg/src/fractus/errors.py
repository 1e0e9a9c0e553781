"""Exception hierarchy shared by every fractus module."""

from __future__ import annotations

from typing import Any


class FractusError(Exception):
    """Base class for all errors raised by fractus."""


class DimensionError(FractusError, ValueError):
    """Operands have incompatible shapes."""


class OrderError(FractusError, ValueError):
    """A fractional order lies outside its admissible range."""


class UnsupportedOrderError(OrderError):
    """The operation does not support the given (valid) order structure."""


class DomainError(FractusError, ValueError):
    """An argument lies outside the domain where a function is evaluated reliably."""


class GridError(FractusError, ValueError):
    """Invalid grid parameters, or a grid too coarse for the requested operation."""


class UnsupportedDomainError(FractusError, ValueError):
    """The solver does not handle a state domain other than the whole space."""


class UnsupportedProblemError(FractusError, ValueError):
    """The problem data lack the structure an operation requires (e.g. constant coefficients)."""


class ConvergenceError(FractusError, RuntimeError):
    """An iteration or series failed to converge.

    Attributes
    ----------
    residual:
        Last measured residual (``nan`` when not meaningful).
    report:
        Optional solver report describing the failed run.
    """

    def __init__(self, message: str, residual: float = float("nan"), report: Any = None):
        super().__init__(message)
        self.residual = residual
        self.report = report


class DomainExitError(FractusError, RuntimeError):
    """A Picard iterate left the state domain."""

    def __init__(self, message: str, time: float, witness: Any):
        super().__init__(message)
        self.time = time
        self.witness = witness


class ExprSyntaxError(FractusError, ValueError):
    """Malformed expression text; ``position`` is the 0-based character offset."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at offset {position})")
        self.position = position


class UnknownIdentifierError(ExprSyntaxError):
    """Identifier not among ``t``, ``x1..xm`` or the supported functions."""

    def __init__(self, name: str, position: int):
        super().__init__(f"unknown identifier {name!r}", position)
        self.name = name


class EvaluationError(FractusError, ArithmeticError):
    """Arithmetic failure while evaluating an expression (division by zero, domain)."""


class SpecError(FractusError, ValueError):
    """Invalid problem file; ``field`` names the offending key, ``line`` its line if known."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        parts = []
        if field is not None:
            parts.append(f"field {field!r}")
        if line is not None:
            parts.append(f"line {line}")
        prefix = f"{', '.join(parts)}: " if parts else ""
        super().__init__(prefix + message)
        self.field = field
        self.line = line
