"""AST for the continuous-query dialect."""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal
from typing import Optional, Union

from ..model import FN, Literal

ROUND_IRI = FN + "round"

COMPARATORS = (">", ">=", "<", "<=", "=")


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self) -> str:
        return "?" + self.name


#: A pattern position holds a variable, an IRI (plain string) or a literal.
PatternTerm = Union[Var, str, Literal]


@dataclass(frozen=True)
class TriplePattern:
    subject: PatternTerm
    predicate: PatternTerm
    object: PatternTerm

    def terms(self) -> tuple[PatternTerm, PatternTerm, PatternTerm]:
        return (self.subject, self.predicate, self.object)

    def variables(self) -> list[Var]:
        return [t for t in self.terms() if isinstance(t, Var)]


@dataclass(frozen=True)
class WindowSpec:
    range_ms: int
    step_ms: int


@dataclass(frozen=True)
class Count:
    """``COUNT([DISTINCT] ?var) AS ?alias``; ``var=None`` means ``COUNT(*)``."""

    var: Optional[Var]
    alias: Var
    distinct: bool = False


@dataclass(frozen=True)
class Bind:
    """``BIND(round(?var * factor) AS ?target)``."""

    function: str
    var: Var
    factor: Decimal
    target: Var


@dataclass(frozen=True)
class Having:
    var: Var
    op: str
    value: Decimal

    def test(self, x) -> bool:
        v = self.value
        if self.op == ">":
            return x > v
        if self.op == ">=":
            return x >= v
        if self.op == "<":
            return x < v
        if self.op == "<=":
            return x <= v
        return x == v


@dataclass(frozen=True)
class ContinuousQuery:
    name: str
    prefixes: dict
    projection: tuple
    stream_iri: str
    window: WindowSpec
    patterns: tuple
    binds: tuple = ()
    group_by: tuple = ()
    having: Optional[Having] = None
    # source positions for diagnostics; never part of equality
    positions: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def aggregates(self) -> list[Count]:
        return [p for p in self.projection if isinstance(p, Count)]

    @property
    def plain_vars(self) -> list[Var]:
        return [p for p in self.projection if isinstance(p, Var)]

    def pattern_vars(self) -> list[Var]:
        seen: dict[Var, None] = {}
        for tp in self.patterns:
            for v in tp.variables():
                seen.setdefault(v)
        return list(seen)

    def bound_vars(self) -> set[Var]:
        return set(self.pattern_vars()) | {b.target for b in self.binds}
