"""Exception hierarchy with stable machine-readable error codes.

Every failure surfaced by the toolkit carries a ``code`` suitable for
programmatic handling (CLI exit reporting, service error bodies). Codes are
part of the public contract and must not change between releases.
"""

from __future__ import annotations


class HistcadError(Exception):
    """Base class for all toolkit errors."""

    code = "ERROR"

    def __init__(self, message: str, **context):
        super().__init__(message)
        self.context = context

    def to_dict(self) -> dict:
        return {"code": self.code, "message": str(self), **self.context}


# --- format / parsing ---------------------------------------------------

class FormatError(HistcadError):
    code = "FORMAT_ERROR"


class DocumentSyntaxError(FormatError):
    """Input text is not well-formed; carries 1-based line/column."""

    code = "SYNTAX_ERROR"

    def __init__(self, message: str, line: int, column: int):
        super().__init__(message, line=line, column=column)
        self.line = line
        self.column = column


class SchemaError(FormatError):
    """Well-formed text that violates the document schema; carries field path."""

    code = "SCHEMA_ERROR"

    def __init__(self, message: str, path: str = ""):
        super().__init__(message, path=path)
        self.path = path


class DuplicateIdError(FormatError):
    code = "DUPLICATE_ID"


class OpenLoopError(FormatError):
    code = "OPEN_LOOP"


class UnsupportedCurveError(FormatError):
    code = "UNSUPPORTED_CURVE"


# --- flattening ----------------------------------------------------------

class DegenerateSegmentError(HistcadError):
    code = "DEGENERATE_SEGMENT"


class NonMinimalOperandsError(HistcadError):
    code = "NON_MINIMAL_OPERANDS"


# --- topology / geometry -------------------------------------------------

class AmbiguousTopologyError(HistcadError):
    code = "AMBIGUOUS_TOPOLOGY"


class DegenerateModelError(HistcadError):
    code = "DEGENERATE_MODEL"


class SelfIntersectingProfileError(HistcadError):
    code = "SELF_INTERSECTING_PROFILE"


class DegenerateDirectionError(HistcadError):
    code = "DEGENERATE_DIRECTION"


class ProfileCrossesAxisError(HistcadError):
    code = "PROFILE_CROSSES_AXIS"


class ExecutionFailedError(HistcadError):
    """A part of a document failed to execute; carries the 0-based part index."""

    code = "EXECUTION_FAILED"

    def __init__(self, message: str, part_index: int, cause: str = ""):
        super().__init__(message, part_index=part_index, cause=cause)
        self.part_index = part_index
        self.cause = cause


class EmptySetError(HistcadError):
    code = "EMPTY_SET"


# --- constraints ----------------------------------------------------------

class UndefinedResidualError(HistcadError):
    code = "UNDEFINED_RESIDUAL"


class InfeasibleError(HistcadError):
    code = "INFEASIBLE"


# --- annotation transport ---------------------------------------------------

class TransportError(HistcadError):
    code = "TRANSPORT_ERROR"


class EmptyResponseError(HistcadError):
    code = "EMPTY_RESPONSE"
