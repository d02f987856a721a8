from __future__ import annotations

from .ast import ROUND_IRI, ContinuousQuery, Count, Var
from .errors import Diagnostic


def validate(q: ContinuousQuery, *, warnings: bool = False) -> list[Diagnostic]:
    """Check the AST invariants; returns one diagnostic per violation.

    Warning-severity findings (``NONGROUPED_PROJECTION``) are only reported
    when ``warnings=True``.
    """
    out: list[Diagnostic] = []
    pos = q.positions

    def diag(code: str, message: str, key=None, severity: str = "error") -> None:
        line, col = pos.get(key) or pos.get("query") or (0, 0)
        out.append(Diagnostic(code, message, severity, line, col))

    w = q.window
    if not (w.range_ms >= w.step_ms > 0):
        diag(
            "INVALID_WINDOW",
            f"window needs RANGE >= STEP > 0, got RANGE {w.range_ms}ms STEP {w.step_ms}ms",
            "window",
        )
    if not q.patterns:
        diag("EMPTY_PATTERN", "WHERE clause has no triple patterns", "query")

    pattern_vars = set(q.pattern_vars())
    bound: set[Var] = set(pattern_vars)
    for b in q.binds:
        if b.function != ROUND_IRI:
            diag("UNKNOWN_FUNCTION", f"unsupported BIND function <{b.function}>", ("bind", b.var.name))
        if b.var not in bound:
            diag("UNBOUND_BIND_INPUT", f"BIND reads {b.var} which is never bound", ("bind", b.var.name))
        if b.target in bound:
            diag(
                "DUPLICATE_BIND_TARGET",
                f"BIND target {b.target} is already bound",
                ("bind-target", b.target.name),
            )
        bound.add(b.target)

    aliases: list[Var] = []
    for item in q.projection:
        if isinstance(item, Count):
            if item.var is not None and item.var not in bound:
                diag("UNBOUND_AGGREGATE", f"COUNT over unbound {item.var}", ("count", item.var.name))
            if item.alias in bound or item.alias in aliases:
                diag("ALIAS_COLLISION", f"alias {item.alias} is already in use", ("alias", item.alias.name))
            aliases.append(item.alias)
        elif item not in bound:
            diag("UNBOUND_PROJECTION", f"projected {item} is never bound", ("select", item.name))

    for v in q.group_by:
        if v in aliases:
            diag("ALIAS_COLLISION", f"aggregate alias {v} used as a group key", ("group", v.name))
        elif v not in bound:
            diag("UNBOUND_GROUP_KEY", f"group key {v} is never bound", ("group", v.name))
    if len(set(q.group_by)) != len(q.group_by):
        diag("DUPLICATE_GROUP_KEY", "a group key is repeated", "group")

    if q.having is not None:
        hv = q.having.var
        if hv not in aliases and hv not in q.group_by:
            diag(
                "BAD_HAVING_VAR",
                f"HAVING tests {hv}, which is neither an aggregate alias nor a group key",
                ("having", hv.name),
            )

    if warnings and (q.group_by or aliases):
        for v in q.plain_vars:
            if v not in q.group_by:
                diag(
                    "NONGROUPED_PROJECTION",
                    f"{v} is projected but not grouped; a sample value is returned per group",
                    ("select", v.name),
                    severity="warning",
                )
    return out
