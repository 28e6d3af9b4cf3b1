"""Exception hierarchy shared by every module.

Every domain error carries a stable ``code`` so the CLI can print a
machine-parseable prefix without string matching on messages.
"""

from __future__ import annotations


class RopeTcError(Exception):
    code = "Error"


class ExponentOverflow(RopeTcError):
    code = "ExponentOverflow"


class DivisionByZero(RopeTcError, ZeroDivisionError):
    code = "DivisionByZero"


class PrecisionMismatch(RopeTcError, ValueError):
    code = "PrecisionMismatch"


class NegativeInput(RopeTcError, ValueError):
    code = "NegativeInput"


class ArgumentTooLarge(RopeTcError, ValueError):
    code = "ArgumentTooLarge"


class ShapeMismatch(RopeTcError, ValueError):
    code = "ShapeMismatch"


class ZeroRowSum(RopeTcError, ZeroDivisionError):
    code = "ZeroRowSum"


class ZeroVariance(RopeTcError, ZeroDivisionError):
    code = "ZeroVariance"


class UnknownKind(RopeTcError, KeyError):
    code = "UnknownKind"

    def __str__(self) -> str:  # KeyError repr-quotes its message otherwise
        return str(self.args[0]) if self.args else self.code


class IncomparableParallelCosts(RopeTcError):
    code = "IncomparableParallelCosts"


class TraceError(RopeTcError):
    code = "TraceError"


class WidthMismatch(RopeTcError, ValueError):
    code = "WidthMismatch"


class CircuitError(RopeTcError, ValueError):
    code = "CircuitError"


class FormatError(RopeTcError, ValueError):
    """Malformed text encoding of a number, matrix, model or circuit."""

    code = "FormatError"


class ParseError(RopeTcError, ValueError):
    """Formula syntax error at a UTF-8 byte ``offset``."""

    code = "ParseError"

    def __init__(self, message: str, offset: int, expected=()):
        self.offset = offset
        self.expected = frozenset(expected)
        detail = message
        if self.expected:
            detail += " (expected one of: " + ", ".join(sorted(self.expected)) + ")"
        super().__init__(f"{detail} at byte {offset}")


class LengthConditionViolated(ParseError):
    code = "LengthConditionViolated"


class UnknownOperator(ParseError):
    code = "UnknownOperator"


class MissingAssignment(RopeTcError, IndexError):
    code = "MissingAssignment"
