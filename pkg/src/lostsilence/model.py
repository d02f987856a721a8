"""Phone status events and their RDF stream encoding.

An event is published as seven triples sharing one stream timestamp::

    net:Phone_<id>  a               net:UserEquipment .
    pos:Point_<id>  a               pos:Point .
    net:Phone_<id>  pos:location    pos:Point_<id> .
    pos:Point_<id>  pos:lat         "<lat>"^^xsd:double .
    pos:Point_<id>  pos:long        "<lon>"^^xsd:double .
    net:<status>    a               net:Status .
    net:Phone_<id>  net:hasStatus   net:<status> .

Event logs are N-Triples with the timestamp carried in a trailing comment,
``<s> <p> <o> . # t=<ms>``.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple, TextIO, Union

__all__ = [
    "NET",
    "POS",
    "RDF",
    "XSD",
    "FN",
    "RDF_TYPE",
    "XSD_DOUBLE",
    "XSD_STRING",
    "XSD_INTEGER",
    "XSD_DECIMAL",
    "STREAM_IRI",
    "Vocabulary",
    "Status",
    "StatusEvent",
    "Literal",
    "Term",
    "TimestampedTriple",
    "ModelError",
    "IncompleteGraphError",
    "AmbiguousGraphError",
    "NTriplesError",
    "phone_iri",
    "point_iri",
    "encode_event",
    "decode_event",
    "decode_events",
    "format_term",
    "format_line",
    "write_ntriples",
    "read_ntriples",
]

NET = "http://home.eps.hw.ac.uk/~qz1/ontologies/wirelessnetwork_networkResource.owl/"
POS = "http://www.w3.org/2003/01/geo/wgs84_pos/"
RDF = "http://www.w3.org/1999/02/22-rdf-syntax-ns#"
XSD = "http://www.w3.org/2001/XMLSchema#"
FN = "http://www.w3.org/2005/xpath-functions#"

RDF_TYPE = RDF + "type"
XSD_DOUBLE = XSD + "double"
XSD_STRING = XSD + "string"
XSD_INTEGER = XSD + "integer"
XSD_DECIMAL = XSD + "decimal"
STREAM_IRI = NET + "stream"


class Vocabulary:
    """IRI constants of the ontology subset used for detection."""

    USER_EQUIPMENT = NET + "UserEquipment"
    HAS_STATUS = NET + "hasStatus"
    STATUS = NET + "Status"
    ATTACHED = NET + "Attached"
    DETACHED = NET + "Detached"
    UNREACHABLE = NET + "unReachable"
    POINT = POS + "Point"
    LOCATION = POS + "location"
    LAT = POS + "lat"
    LONG = POS + "long"
    ALT = POS + "alt"
    # spellings used in the worked example; accepted on decode only
    LATITUDE = POS + "latitude"
    LONGITUDE = POS + "longitude"


class Status(enum.Enum):
    ATTACHED = Vocabulary.ATTACHED
    DETACHED = Vocabulary.DETACHED
    UNREACHABLE = Vocabulary.UNREACHABLE

    @property
    def iri(self) -> str:
        return self.value


class Literal(NamedTuple):
    lexical: str
    datatype: str = XSD_STRING

    def to_python(self):
        if self.datatype in (XSD_DOUBLE, XSD_DECIMAL):
            return float(self.lexical)
        if self.datatype == XSD_INTEGER:
            return int(self.lexical)
        return self.lexical


#: IRIs are plain strings, blank nodes are strings starting with ``_:``.
Term = Union[str, Literal]


class TimestampedTriple(NamedTuple):
    subject: str
    predicate: str
    object: Term
    timestamp: int


class ModelError(ValueError):
    pass


class IncompleteGraphError(ModelError):
    def __init__(self, missing: str):
        super().__init__(f"incomplete event graph: missing {missing}")
        self.missing = missing


class AmbiguousGraphError(ModelError):
    pass


@dataclass(frozen=True)
class StatusEvent:
    phone_id: str
    lat: float
    lon: float
    status: Status
    timestamp: int

    def __post_init__(self):
        if not self.phone_id:
            raise ModelError("phone_id must be non-empty")
        if self.timestamp < 0:
            raise ModelError(f"negative timestamp {self.timestamp}")
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ModelError("coordinates must be finite")
        if not isinstance(self.status, Status):
            raise ModelError(f"not a Status: {self.status!r}")


def phone_iri(phone_id: str) -> str:
    return f"{NET}Phone_{phone_id}"


def point_iri(phone_id: str) -> str:
    return f"{POS}Point_{phone_id}"


_PHONE_PREFIX = NET + "Phone_"


def encode_event(e: StatusEvent) -> list[TimestampedTriple]:
    phone = _PHONE_PREFIX + e.phone_id
    point = f"{POS}Point_{e.phone_id}"
    t = e.timestamp
    V = Vocabulary
    return [
        TimestampedTriple(phone, RDF_TYPE, V.USER_EQUIPMENT, t),
        TimestampedTriple(point, RDF_TYPE, V.POINT, t),
        TimestampedTriple(phone, V.LOCATION, point, t),
        TimestampedTriple(point, V.LAT, Literal(repr(float(e.lat)), XSD_DOUBLE), t),
        TimestampedTriple(point, V.LONG, Literal(repr(float(e.lon)), XSD_DOUBLE), t),
        TimestampedTriple(e.status.value, RDF_TYPE, V.STATUS, t),
        TimestampedTriple(phone, V.HAS_STATUS, e.status.value, t),
    ]


_STATUS_BY_IRI = {s.value: s for s in Status}


def _single(values: set, what: str):
    if not values:
        raise IncompleteGraphError(what)
    if len(values) > 1:
        raise AmbiguousGraphError(f"conflicting values for {what}: {sorted(map(str, values))}")
    return next(iter(values))


def _number(term: Term, what: str) -> float:
    if not isinstance(term, Literal):
        raise ModelError(f"{what} is not a literal: {term!r}")
    try:
        value = float(term.lexical)
    except ValueError:
        raise ModelError(f"{what} is not numeric: {term.lexical!r}") from None
    return value


def decode_event(triples: Iterable[TimestampedTriple]) -> StatusEvent:
    """Rebuild the single :class:`StatusEvent` described by ``triples``."""
    triples = list(triples)
    V = Vocabulary
    status_triples = {(t.subject, t.object) for t in triples if t.predicate == V.HAS_STATUS}
    phone, status_iri = _single(status_triples, V.HAS_STATUS)
    timestamp = _single(
        {t.timestamp for t in triples if t.predicate == V.HAS_STATUS}, V.HAS_STATUS
    )
    point = _single(
        {t.object for t in triples if t.subject == phone and t.predicate == V.LOCATION},
        V.LOCATION,
    )
    lat = _single(
        {t.object for t in triples if t.subject == point and t.predicate in (V.LAT, V.LATITUDE)},
        V.LAT,
    )
    lon = _single(
        {t.object for t in triples if t.subject == point and t.predicate in (V.LONG, V.LONGITUDE)},
        V.LONG,
    )
    if status_iri not in _STATUS_BY_IRI:
        raise ModelError(f"unknown status {status_iri!r}")
    phone_id = phone[len(_PHONE_PREFIX):] if phone.startswith(_PHONE_PREFIX) else phone
    return StatusEvent(
        phone_id, _number(lat, V.LAT), _number(lon, V.LONG), _STATUS_BY_IRI[status_iri], timestamp
    )


def decode_events(triples: Iterable[TimestampedTriple]) -> Iterator[StatusEvent]:
    """Decode a stream produced by repeated :func:`encode_event` calls.

    Events are delimited by their ``hasStatus`` triple, which closes each
    seven-triple group.
    """
    pending: list[TimestampedTriple] = []
    for t in triples:
        pending.append(t)
        if t.predicate == Vocabulary.HAS_STATUS:
            yield decode_event(pending)
            pending = []
    if pending:
        raise IncompleteGraphError(Vocabulary.HAS_STATUS)


# --- N-Triples -------------------------------------------------------------


class NTriplesError(ModelError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


_ESCAPES = {"\\": "\\\\", '"': '\\"', "\n": "\\n", "\r": "\\r", "\t": "\\t"}
_UNESCAPES = {
    "t": "\t", "b": "\b", "n": "\n", "r": "\r", "f": "\f", '"': '"', "'": "'", "\\": "\\",
}
_IRI_FORBIDDEN = re.compile(r'[\x00-\x20<>"{}|^`\\]')


def _escape_string(s: str) -> str:
    if not any(c in s for c in _ESCAPES):
        return s
    return "".join(_ESCAPES.get(c, c) for c in s)


def _format_iri(iri: str) -> str:
    if _IRI_FORBIDDEN.search(iri):
        iri = _IRI_FORBIDDEN.sub(lambda m: f"\\u{ord(m.group()):04X}", iri)
    return f"<{iri}>"


def format_term(term: Term) -> str:
    if isinstance(term, Literal):
        body = f'"{_escape_string(term.lexical)}"'
        return body if term.datatype == XSD_STRING else f"{body}^^{_format_iri(term.datatype)}"
    if term.startswith("_:"):
        return term
    return _format_iri(term)


def format_line(t: TimestampedTriple) -> str:
    return (
        f"{format_term(t.subject)} {format_term(t.predicate)} {format_term(t.object)}"
        f" . # t={t.timestamp}\n"
    )


def write_ntriples(triples: Iterable[TimestampedTriple], out: TextIO | None = None):
    """Serialise triples one per line.

    Returns the list of lines when ``out`` is None, otherwise writes to it.
    """
    if out is None:
        return [format_line(t) for t in triples]
    for t in triples:
        out.write(format_line(t))
    return None


_UCHAR = re.compile(r"\\u([0-9A-Fa-f]{4})|\\U([0-9A-Fa-f]{8})")
_ECHAR = re.compile(r"\\(?:u([0-9A-Fa-f]{4})|U([0-9A-Fa-f]{8})|(.))", re.S)

_IRI = r"<([^<>\"{}|^`\\\x00-\x20]*(?:\\[uU][0-9A-Fa-f]+[^<>\"{}|^`\\\x00-\x20]*)*)>"
_BNODE = r"(_:[A-Za-z0-9_][A-Za-z0-9_.\-]*(?<!\.))"
_LIT = r'"((?:[^"\\\n\r]|\\.)*)"(?:\^\^' + _IRI + r")?"
_LINE = re.compile(
    rf"[ \t]*(?:{_IRI}|{_BNODE})[ \t]+{_IRI}[ \t]+(?:{_IRI}|{_BNODE}|{_LIT})[ \t]*\.[ \t]*(.*)$"
)
_STAMP = re.compile(r"#\s*t=(\d+)\s*$")


def _unescape_iri(s: str) -> str:
    if "\\" not in s:
        return s
    return _UCHAR.sub(lambda m: chr(int(m.group(1) or m.group(2), 16)), s)


def _unescape_lit(s: str, line_no: int) -> str:
    if "\\" not in s:
        return s

    def repl(m):
        hexcode = m.group(1) or m.group(2)
        if hexcode:
            return chr(int(hexcode, 16))
        c = m.group(3)
        if c not in _UNESCAPES:
            raise NTriplesError(line_no, f"invalid escape \\{c}")
        return _UNESCAPES[c]

    return _ECHAR.sub(repl, s)


def read_ntriples(lines: Iterable[str]) -> Iterator[TimestampedTriple]:
    """Parse N-Triples lines with ``# t=<ms>`` stamps.

    Blank lines and lines that are only a comment are skipped.
    """
    for line_no, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n").rstrip("\r")
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        m = _LINE.match(line)
        if m is None:
            if not stripped.rstrip().split("#")[0].rstrip().endswith("."):
                raise NTriplesError(line_no, "triple is not terminated by '.'")
            raise NTriplesError(line_no, f"malformed triple: {stripped[:80]!r}")
        s_iri, s_bnode, p, o_iri, o_bnode, o_lex, o_dt, tail = m.groups()
        stamp = _STAMP.fullmatch(tail.strip()) if tail.strip() else None
        if stamp is None:
            raise NTriplesError(line_no, "missing '# t=<ms>' timestamp")
        subject = _unescape_iri(s_iri) if s_iri is not None else s_bnode
        if o_iri is not None:
            obj: Term = _unescape_iri(o_iri)
        elif o_bnode is not None:
            obj = o_bnode
        else:
            obj = Literal(
                _unescape_lit(o_lex, line_no),
                _unescape_iri(o_dt) if o_dt is not None else XSD_STRING,
            )
        yield TimestampedTriple(subject, _unescape_iri(p), obj, int(stamp.group(1)))
