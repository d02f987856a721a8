from __future__ import annotations

import re
from decimal import Decimal

from ..model import RDF_TYPE, XSD_DECIMAL, XSD_DOUBLE, XSD_INTEGER, XSD_STRING, Literal
from .ast import ROUND_IRI, ContinuousQuery, Count, Var

_SAFE_LOCAL = re.compile(r"[A-Za-z0-9_](?:[A-Za-z0-9_\-.]*[A-Za-z0-9_\-])?")
_NUMERIC_FORMS = {
    XSD_INTEGER: re.compile(r"-?\d+"),
    XSD_DECIMAL: re.compile(r"-?\d*\.\d+"),
    XSD_DOUBLE: re.compile(r"-?(?:\d+(?:\.\d+)?|\.\d+)[eE][+-]?\d+"),
}


def format_duration(ms: int) -> str:
    for unit, size in (("h", 3_600_000), ("m", 60_000), ("s", 1000)):
        if ms and ms % size == 0:
            return f"{ms // size}{unit}"
    return f"{ms}ms"


def _number(d: Decimal) -> str:
    text = format(d, "f")
    if "." in text:
        text = text.rstrip("0").rstrip(".")
    return text if text not in ("-0", "") else "0"


class _Printer:
    def __init__(self, prefixes: dict[str, str]):
        # longest namespace first, then prefix name, so output is deterministic
        self.ns = sorted(prefixes.items(), key=lambda kv: (-len(kv[1]), kv[0]))

    def iri(self, iri: str) -> str:
        for prefix, ns in self.ns:
            if iri.startswith(ns) and _SAFE_LOCAL.fullmatch(iri[len(ns):]):
                return f"{prefix}:{iri[len(ns):]}"
        return f"<{iri}>"

    def term(self, t) -> str:
        if isinstance(t, Var):
            return str(t)
        if isinstance(t, Literal):
            form = _NUMERIC_FORMS.get(t.datatype)
            if form is not None and form.fullmatch(t.lexical):
                return t.lexical
            body = '"' + t.lexical.replace("\\", "\\\\").replace('"', '\\"').replace(
                "\n", "\\n").replace("\r", "\\r").replace("\t", "\\t") + '"'
            return body if t.datatype == XSD_STRING else f"{body}^^{self.iri(t.datatype)}"
        return self.iri(t)

    def function(self, iri: str) -> str:
        if iri == ROUND_IRI:
            compact = self.iri(iri)
            return compact if not compact.startswith("<") else "ROUND"
        return self.iri(iri)


def format_query(q: ContinuousQuery) -> str:
    """Render ``q`` as canonical query text; parsing it back yields ``q``."""
    p = _Printer(q.prefixes)
    lines = [f"REGISTER QUERY {q.name} AS"]
    for prefix in sorted(q.prefixes):
        lines.append(f"PREFIX {prefix}: <{q.prefixes[prefix]}>")
    items = []
    for item in q.projection:
        if isinstance(item, Count):
            inner = "*" if item.var is None else str(item.var)
            if item.distinct:
                inner = "DISTINCT " + inner
            items.append(f"(COUNT({inner}) AS {item.alias})")
        else:
            items.append(str(item))
    lines.append("SELECT " + " ".join(items))
    w = q.window
    lines.append(
        f"FROM STREAM <{q.stream_iri}> "
        f"[RANGE {format_duration(w.range_ms)} STEP {format_duration(w.step_ms)}]"
    )
    lines.append("WHERE {")
    for tp in q.patterns:
        pred = "a" if tp.predicate == RDF_TYPE else p.term(tp.predicate)
        lines.append(f"  {p.term(tp.subject)} {pred} {p.term(tp.object)} .")
    for b in q.binds:
        lines.append(f"  BIND ({p.function(b.function)}({b.var} * {_number(b.factor)}) AS {b.target})")
    lines.append("}")
    if q.group_by:
        lines.append("GROUP BY " + " ".join(str(v) for v in q.group_by))
    if q.having is not None:
        h = q.having
        lines.append(f"HAVING ({h.var} {h.op} {_number(h.value)})")
    return "\n".join(lines) + "\n"
