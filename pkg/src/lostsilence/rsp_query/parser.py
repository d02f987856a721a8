"""Lexer and recursive-descent parser for the continuous-query dialect.

Supported grammar (keywords are case-insensitive)::

    REGISTER QUERY <name> AS
    PREFIX p: <iri> ...
    SELECT ( (COUNT([DISTINCT] ?v|*) AS ?alias) | ?v )+
    FROM STREAM <iri> [RANGE <dur> STEP <dur>]
    [WHERE] { triples ('.' triples)* BIND(round(?v * k) AS ?w)* }
    [GROUP BY ?v+] [HAVING (?v op number)]

Durations take the suffixes ``ms``, ``s``, ``m`` (minutes) and ``h``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from typing import Union

from ..model import RDF_TYPE, XSD_DECIMAL, XSD_DOUBLE, XSD_INTEGER, XSD_STRING, Literal
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
    MissingWindowError,
    QueryLexError,
    QuerySyntaxError,
    QueryValidationError,
    UnknownPrefixError,
)

DURATION_UNITS = {"ms": 1, "s": 1000, "m": 60_000, "h": 3_600_000}

# token kinds
WORD, VAR, IRI, PNAME, NUMBER, DURATION, STRING, PUNCT, EOF = (
    "word", "var", "iri", "pname", "number", "duration", "string", "punct", "eof",
)


@dataclass(frozen=True)
class Token:
    kind: str
    value: object
    line: int
    col: int
    text: str = ""

    def describe(self) -> str:
        if self.kind == EOF:
            return "end of input"
        return repr(self.text or str(self.value))


_WS = re.compile(r"(?:\s+|#[^\n]*)+")
_VAR = re.compile(r"[?$]([A-Za-z_][A-Za-z0-9_]*)")
_STRICT_IRI = re.compile(r"<([^<>\"{}|^`\\\x00-\x20]*)>")
_NUMBER = re.compile(r"(\d+(?:\.\d+)?|\.\d+)([eE][+-]?\d+)?")
_WORD = re.compile(r"[A-Za-z_][A-Za-z0-9_\-]*")
_PN_PREFIX = re.compile(r"(?:[A-Za-z][A-Za-z0-9_\-.]*[A-Za-z0-9_\-]|[A-Za-z])?:")
_PN_LOCAL = re.compile(r"(?:[A-Za-z0-9_:%\-]|\\[_~.\-!$&'()*+,;=/?#@%]|\.(?=[A-Za-z0-9_:%\-\\]))*")
_LOCAL_ESC = re.compile(r"\\(.)")
_STRING = re.compile(r'"((?:[^"\\\n]|\\.)*)"|\'((?:[^\'\\\n]|\\.)*)\'')
_STR_ESC = {"t": "\t", "n": "\n", "r": "\r", "b": "\b", "f": "\f", '"': '"', "'": "'", "\\": "\\"}
_PUNCT = (">=", "<=", "^^", "(", ")", "{", "}", "[", "]", ".", ";", ",", "*", ">", "<", "=", "-", "+")


class Lexer:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.line = 1
        self.line_start = 0

    def _advance(self, n: int) -> None:
        chunk = self.text[self.pos:self.pos + n]
        nl = chunk.count("\n")
        if nl:
            self.line += nl
            self.line_start = self.pos + chunk.rindex("\n") + 1
        self.pos += n

    def _col(self) -> int:
        return self.pos - self.line_start + 1

    def _error(self, message: str) -> QueryLexError:
        return QueryLexError(message, self.line, self._col())

    def tokens(self) -> list[Token]:
        out: list[Token] = []
        text = self.text
        while True:
            m = _WS.match(text, self.pos)
            if m:
                self._advance(m.end() - self.pos)
            if self.pos >= len(text):
                out.append(Token(EOF, None, self.line, self._col()))
                return out
            line, col = self.line, self._col()
            tok = self._next(out)
            out.append(Token(tok[0], tok[1], line, col, tok[2]))

    def _prefix_context(self, out: list[Token]) -> bool:
        return (
            len(out) >= 2
            and out[-1].kind == PNAME
            and out[-2].kind == WORD
            and str(out[-2].value).upper() == "PREFIX"
        )

    def _next(self, out: list[Token]) -> tuple[str, object, str]:
        text, pos = self.text, self.pos
        c = text[pos]
        if c in "?$":
            m = _VAR.match(text, pos)
            if not m:
                raise self._error(f"invalid variable name after {c!r}")
            self._advance(m.end() - pos)
            return VAR, m.group(1), m.group()
        if c == "<":
            m = _STRICT_IRI.match(text, pos)
            if m:
                self._advance(m.end() - pos)
                return IRI, m.group(1), m.group()
            if self._prefix_context(out):
                return self._relaxed_iri()
        if c in "\"'":
            m = _STRING.match(text, pos)
            if not m:
                raise self._error("unterminated string literal")
            raw = m.group(1) if m.group(1) is not None else m.group(2)
            self._advance(m.end() - pos)
            return STRING, self._unescape(raw), m.group()
        if c.isdigit() or (c == "." and pos + 1 < len(text) and text[pos + 1].isdigit()):
            return self._number()
        if c.isalpha() or c == "_" or c == ":":
            return self._word()
        for p in _PUNCT:
            if text.startswith(p, pos):
                self._advance(len(p))
                return PUNCT, p, p
        raise self._error(f"unexpected character {c!r}")

    def _relaxed_iri(self) -> tuple[str, object, str]:
        # PREFIX declarations tolerate wrapped lines and backslash-escaped
        # characters inside <...>; whitespace is dropped, escapes resolved.
        text, start = self.text, self.pos
        end = text.find(">", start + 1)
        bad = text.find("<", start + 1)
        if end < 0 or (0 <= bad < end):
            raise self._error("unterminated IRI")
        raw = text[start + 1:end]
        value = re.sub(r"\\(.)", r"\1", re.sub(r"\s+", "", raw))
        if not value or _STRICT_IRI.fullmatch(f"<{value}>") is None:
            raise self._error(f"invalid IRI <{raw}>")
        self._advance(end + 1 - start)
        return IRI, value, text[start:end + 1]

    def _number(self) -> tuple[str, object, str]:
        text, pos = self.text, self.pos
        m = _NUMBER.match(text, pos)
        assert m is not None
        end = m.end()
        unit = _WORD.match(text, end)
        if unit:
            u = unit.group()
            if m.group(2) or u.lower() not in DURATION_UNITS:
                raise self._error(f"invalid number or duration {text[pos:unit.end()]!r}")
            try:
                value = Decimal(m.group(1)) * DURATION_UNITS[u.lower()]
            except InvalidOperation:  # pragma: no cover - regex guarantees digits
                raise self._error("invalid duration") from None
            if value != value.to_integral_value():
                raise self._error(f"duration {text[pos:unit.end()]!r} is not a whole number of ms")
            self._advance(unit.end() - pos)
            return DURATION, int(value), text[pos:unit.end()]
        self._advance(end - pos)
        return NUMBER, m.group(), m.group()

    def _word(self) -> tuple[str, object, str]:
        text, pos = self.text, self.pos
        m = _PN_PREFIX.match(text, pos)
        if m:
            prefix = m.group()[:-1]
            local = _PN_LOCAL.match(text, m.end())
            raw = local.group() if local else ""
            self._advance((m.end() + len(raw)) - pos)
            return PNAME, (prefix, _LOCAL_ESC.sub(r"\1", raw)), text[pos:self.pos]
        m = _WORD.match(text, pos)
        if not m:
            raise self._error(f"unexpected character {text[pos]!r}")
        self._advance(m.end() - pos)
        return WORD, m.group(), m.group()

    def _unescape(self, raw: str) -> str:
        def repl(m: re.Match) -> str:
            c = m.group(1)
            if c not in _STR_ESC:
                raise self._error(f"invalid escape \\{c}")
            return _STR_ESC[c]

        return re.sub(r"\\(.)", repl, raw)


class Parser:
    def __init__(self, text: str):
        self.toks = Lexer(text).tokens()
        self.i = 0
        self.prefixes: dict[str, str] = {}
        self.positions: dict = {}

    # -- token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def _error(self, expected: str, tok: Token | None = None) -> QuerySyntaxError:
        tok = tok or self.tok
        return QuerySyntaxError(f"expected {expected}, found {tok.describe()}", tok.line, tok.col)

    def _take(self) -> Token:
        tok = self.toks[self.i]
        if tok.kind != EOF:
            self.i += 1
        return tok

    def _is_kw(self, *words: str, tok: Token | None = None) -> bool:
        tok = tok or self.tok
        return tok.kind == WORD and str(tok.value).upper() in words

    def _kw(self, word: str) -> Token:
        if not self._is_kw(word):
            raise self._error(word)
        return self._take()

    def _is_punct(self, p: str) -> bool:
        return self.tok.kind == PUNCT and self.tok.value == p

    def _punct(self, p: str) -> Token:
        if not self._is_punct(p):
            raise self._error(repr(p))
        return self._take()

    def _var(self, role: str | None = None) -> Var:
        tok = self.tok
        if tok.kind != VAR:
            raise self._error("a variable")
        self._take()
        v = Var(str(tok.value))
        if role is not None:
            self.positions.setdefault((role, v.name), (tok.line, tok.col))
        return v

    def _expand(self, tok: Token) -> str:
        prefix, local = tok.value  # type: ignore[misc]
        if prefix not in self.prefixes:
            raise UnknownPrefixError(f"undeclared prefix {prefix + ':'!r}", tok.line, tok.col)
        return self.prefixes[prefix] + local

    def _iri(self) -> str:
        tok = self.tok
        if tok.kind == IRI:
            self._take()
            return str(tok.value)
        if tok.kind == PNAME:
            self._take()
            return self._expand(tok)
        raise self._error("an IRI")

    # -- grammar
    def parse(self) -> ContinuousQuery:
        start = self.tok
        self._kw("REGISTER")
        self._kw("QUERY")
        name_tok = self.tok
        if name_tok.kind != WORD:
            raise self._error("a query name")
        self._take()
        self._kw("AS")
        while self._is_kw("PREFIX"):
            self._prefix_decl()
        projection = self._select()
        stream_iri, window = self._from()
        patterns, binds = self._where()
        group_by: list[Var] = []
        if self._is_kw("GROUP"):
            self.positions["group"] = (self.tok.line, self.tok.col)
            self._take()
            self._kw("BY")
            group_by.append(self._var("group"))
            while self.tok.kind == VAR:
                group_by.append(self._var("group"))
        having = None
        if self._is_kw("HAVING"):
            having = self._having()
        if self.tok.kind != EOF:
            raise self._error("end of query")
        self.positions["query"] = (start.line, start.col)
        return ContinuousQuery(
            name=str(name_tok.value),
            prefixes=dict(self.prefixes),
            projection=tuple(projection),
            stream_iri=stream_iri,
            window=window,
            patterns=tuple(patterns),
            binds=tuple(binds),
            group_by=tuple(group_by),
            having=having,
            positions=self.positions,
        )

    def _prefix_decl(self) -> None:
        self._take()
        tok = self.tok
        if tok.kind != PNAME or tok.value[1] != "":  # type: ignore[index]
            raise self._error("a prefix name such as 'pos:'")
        self._take()
        iri_tok = self.tok
        if iri_tok.kind != IRI:
            raise self._error("an IRI in angle brackets")
        self._take()
        self.prefixes[tok.value[0]] = str(iri_tok.value)  # type: ignore[index]

    def _select(self) -> list[Union[Count, Var]]:
        self.positions["select"] = (self.tok.line, self.tok.col)
        self._kw("SELECT")
        items: list[Union[Count, Var]] = []
        while True:
            if self.tok.kind == VAR:
                items.append(self._var("select"))
            elif self._is_punct("("):
                items.append(self._count())
            else:
                break
        if not items:
            raise self._error("a projection")
        return items

    def _count(self) -> Count:
        self._punct("(")
        self._kw("COUNT")
        self._punct("(")
        distinct = False
        if self._is_kw("DISTINCT"):
            self._take()
            distinct = True
        var = None
        if self._is_punct("*"):
            self._take()
        else:
            var = self._var("count")
        self._punct(")")
        self._kw("AS")
        alias = self._var("alias")
        self._punct(")")
        return Count(var, alias, distinct)

    def _duration(self) -> int:
        tok = self.tok
        if tok.kind != DURATION:
            raise self._error("a duration such as 30m or 5s")
        self._take()
        return int(tok.value)  # type: ignore[arg-type]

    def _from(self) -> tuple[str, WindowSpec]:
        tok = self.tok
        if not self._is_kw("FROM"):
            raise MissingWindowError(
                "stream query needs FROM STREAM <iri> [RANGE ... STEP ...]", tok.line, tok.col
            )
        self._take()
        self._kw("STREAM")
        iri = self._iri()
        if not self._is_punct("["):
            t = self.tok
            raise MissingWindowError(
                "FROM STREAM needs a window clause [RANGE ... STEP ...]", t.line, t.col
            )
        self.positions["window"] = (self.tok.line, self.tok.col)
        self._take()
        self._kw("RANGE")
        range_ms = self._duration()
        self._kw("STEP")
        step_ms = self._duration()
        self._punct("]")
        return iri, WindowSpec(range_ms, step_ms)

    def _where(self) -> tuple[list[TriplePattern], list[Bind]]:
        if self._is_kw("WHERE"):
            self._take()
        self._punct("{")
        patterns: list[TriplePattern] = []
        binds: list[Bind] = []
        while not self._is_punct("}"):
            if self._is_kw("BIND"):
                binds.append(self._bind())
                continue
            if self.tok.kind == EOF:
                raise self._error("'}'")
            self._triples(patterns)
            if self._is_punct("."):
                self._take()
            elif not (self._is_punct("}") or self._is_kw("BIND")):
                raise self._error("'.' or '}'")
        self._take()
        return patterns, binds

    def _triples(self, out: list[TriplePattern]) -> None:
        subject = self._term(allow_literal=False, role="pattern")
        while True:
            if self._is_kw("a", "A") and self.tok.value == "a":
                self._take()
                pred = RDF_TYPE
            else:
                pred = self._term(allow_literal=False, role="pattern")
            out.append(TriplePattern(subject, pred, self._term(role="pattern")))
            while self._is_punct(","):
                self._take()
                out.append(TriplePattern(subject, pred, self._term(role="pattern")))
            if not self._is_punct(";"):
                return
            while self._is_punct(";"):
                self._take()
            if self._is_punct(".") or self._is_punct("}") or self._is_kw("BIND"):
                return

    def _term(self, allow_literal: bool = True, role: str | None = None):
        tok = self.tok
        if tok.kind == VAR:
            return self._var(role)
        if tok.kind in (IRI, PNAME):
            return self._iri()
        if allow_literal:
            if tok.kind == STRING:
                self._take()
                if self._is_punct("^^"):
                    self._take()
                    return Literal(str(tok.value), self._iri())
                return Literal(str(tok.value), XSD_STRING)
            if tok.kind == NUMBER or (tok.kind == PUNCT and tok.value in ("-", "+")):
                return self._numeric_literal()
        raise self._error("a variable, IRI or literal" if allow_literal else "a variable or IRI")

    def _signed_number(self) -> str:
        sign = ""
        if self.tok.kind == PUNCT and self.tok.value in ("-", "+"):
            sign = "-" if self._take().value == "-" else ""
        tok = self.tok
        if tok.kind != NUMBER:
            raise self._error("a number")
        self._take()
        return sign + str(tok.value)

    def _numeric_literal(self) -> Literal:
        text = self._signed_number()
        if "e" in text.lower():
            return Literal(text, XSD_DOUBLE)
        if "." in text:
            return Literal(text, XSD_DECIMAL)
        return Literal(text, XSD_INTEGER)

    def _number(self) -> Decimal:
        return Decimal(self._signed_number())

    def _bind(self) -> Bind:
        self.positions.setdefault("bind", (self.tok.line, self.tok.col))
        self._take()
        self._punct("(")
        ftok = self.tok
        if self._is_kw("ROUND"):
            self._take()
            function = ROUND_IRI
        elif ftok.kind in (IRI, PNAME):
            function = self._iri()
        else:
            raise self._error("round(...)")
        self._punct("(")
        if self.tok.kind == VAR:
            var = self._var("bind")
            self._punct("*")
            factor = self._number()
        else:
            factor = self._number()
            self._punct("*")
            var = self._var("bind")
        self._punct(")")
        self._kw("AS")
        target = self._var("bind-target")
        self._punct(")")
        return Bind(function, var, factor, target)

    def _having(self) -> Having:
        self.positions["having"] = (self.tok.line, self.tok.col)
        self._take()
        self._punct("(")
        var = self._var("having")
        tok = self.tok
        if tok.kind != PUNCT or tok.value not in COMPARATORS:
            raise self._error("a comparison operator")
        self._take()
        value = self._number()
        self._punct(")")
        return Having(var, str(tok.value), value)


def parse_query(text: Union[str, bytes]) -> ContinuousQuery:
    """Parse and validate one ``REGISTER QUERY`` text.

    Raises a :class:`~lostsilence.rsp_query.errors.QueryError` subclass with
    line and column on any failure.
    """
    from .validate import validate

    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            before = text[: exc.start]
            line = before.count(b"\n") + 1
            col = exc.start - (before.rfind(b"\n") + 1) + 1
            raise QueryLexError("input is not valid UTF-8", line, col) from None
    q = Parser(text).parse()
    errors = [d for d in validate(q) if d.severity == "error"]
    if errors:
        raise QueryValidationError(errors)
    return q
