"""Continuous-query dialect: parsing, validation and canonical printing."""

from .ast import (
    COMPARATORS,
    ROUND_IRI,
    Bind,
    ContinuousQuery,
    Count,
    Having,
    TriplePattern,
    Var,
    WindowSpec,
)
from .errors import (
    Diagnostic,
    MissingWindowError,
    QueryError,
    QueryLexError,
    QuerySyntaxError,
    QueryValidationError,
    UnknownPrefixError,
)
from .parser import DURATION_UNITS, parse_query
from .printer import format_duration, format_query
from .validate import validate

__all__ = [
    "COMPARATORS",
    "ROUND_IRI",
    "Bind",
    "ContinuousQuery",
    "Count",
    "Having",
    "TriplePattern",
    "Var",
    "WindowSpec",
    "Diagnostic",
    "MissingWindowError",
    "QueryError",
    "QueryLexError",
    "QuerySyntaxError",
    "QueryValidationError",
    "UnknownPrefixError",
    "DURATION_UNITS",
    "parse_query",
    "format_duration",
    "format_query",
    "validate",
]
