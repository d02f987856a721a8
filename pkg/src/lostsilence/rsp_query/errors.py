from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    severity: str = "error"
    line: int = 0
    col: int = 0

    def __str__(self) -> str:
        where = f"{self.line}:{self.col}: " if self.line else ""
        return f"{where}{self.severity} {self.code}: {self.message}"


class QueryError(ValueError):
    """Base class; every instance carries a 1-based line and column."""

    kind = "error"

    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.message = message
        self.line = line
        self.col = col


class QueryLexError(QueryError):
    kind = "lexical"


class QuerySyntaxError(QueryError):
    kind = "syntax"


class UnknownPrefixError(QueryError):
    kind = "unknown-prefix"


class MissingWindowError(QueryError):
    kind = "missing-window"


class QueryValidationError(QueryError):
    kind = "validation"

    def __init__(self, diagnostics: list[Diagnostic]):
        first = diagnostics[0]
        super().__init__(
            "; ".join(f"{d.code}: {d.message}" for d in diagnostics),
            first.line or 1,
            first.col or 1,
        )
        self.diagnostics = diagnostics
