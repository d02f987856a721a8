"""Continuous evaluation of registered queries over timestamped triple streams.

Each registered query owns a sliding window over one stream.  At every
evaluation time ``T`` (registration time plus a whole number of steps) the
window holds the triples with timestamps in ``(T - range, T]``; it is kept
as a reference-counted RDF graph, so a triple emitted twice inside the
window is one graph edge.  The basic graph pattern is matched against that
graph, BINDs are applied, solutions are grouped and counted, and only the
groups passing HAVING are returned.

Ingestion is strictly in timestamp order per stream.  An event whose
timestamp is at or before an evaluation already run on its stream would be
silently missed, so it is rejected as late.
"""

from __future__ import annotations

import heapq
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal, InvalidOperation
from functools import lru_cache
from typing import Callable, Iterable, Optional, TextIO

from .model import XSD, Literal, TimestampedTriple
from .rsp_query import ContinuousQuery, Var, validate

__all__ = [
    "EngineError",
    "UnknownStreamError",
    "LateEventError",
    "AlreadyRegisteredError",
    "NotDueError",
    "ClockError",
    "ResultRow",
    "StreamBuffer",
    "QueryHandle",
    "Engine",
    "RESULT_LOG_HEADER",
    "write_result_log",
]

Sink = Callable[[str, int, list], None]


class EngineError(RuntimeError):
    pass


class UnknownStreamError(EngineError):
    pass


class LateEventError(EngineError):
    pass


class AlreadyRegisteredError(EngineError):
    pass


class NotDueError(EngineError):
    pass


class ClockError(EngineError):
    pass


@dataclass
class ResultRow:
    eval_time: int
    group: dict
    values: dict

    def __getitem__(self, name: str):
        if name in self.group:
            return self.group[name]
        return self.values[name]

    def get(self, name: str, default=None):
        try:
            return self[name]
        except KeyError:
            return default


class StreamBuffer:
    """Time-ordered batches of triples for one stream IRI.

    Entries are ``(timestamp, ((s, p, o), ...))`` and are addressed by an
    absolute sequence number so that readers keep valid cursors across
    trimming.
    """

    def __init__(self, iri: str):
        self.iri = iri
        self.entries: list[tuple[int, tuple]] = []
        self.base_seq = 0
        self.watermark = -1
        self.sealed = -1  # latest evaluation time already run over this stream
        self.lock = threading.Lock()

    @property
    def end_seq(self) -> int:
        return self.base_seq + len(self.entries)

    def entry(self, seq: int) -> tuple[int, tuple]:
        return self.entries[seq - self.base_seq]

    def append(self, timestamp: int, triples: tuple) -> None:
        self.entries.append((timestamp, triples))
        self.watermark = timestamp

    def trim(self, keep_from: int) -> None:
        drop = keep_from - self.base_seq
        # amortised: only compact once the dead prefix is large
        if drop > 0 and (drop >= 4096 or drop * 2 >= len(self.entries)):
            del self.entries[:drop]
            self.base_seq = keep_from

    def __len__(self) -> int:
        return len(self.entries)


_NUMERIC_TYPES = {
    XSD + t
    for t in ("double", "decimal", "integer", "float", "int", "long", "short",
              "nonNegativeInteger", "positiveInteger", "negativeInteger", "nonPositiveInteger")
}


@lru_cache(maxsize=1 << 17)
def _round_scaled(lexical: str, factor: Decimal) -> Optional[int]:
    try:
        d = (Decimal(lexical.strip()) * factor).to_integral_value(rounding=ROUND_HALF_UP)
        return int(d)
    except (InvalidOperation, ValueError, OverflowError):
        return None


def _numeric_lexical(term) -> Optional[str]:
    if isinstance(term, Literal) and term.datatype in _NUMERIC_TYPES:
        return term.lexical
    return None


def _value(term):
    """Python value of a bound term for result rows."""
    if isinstance(term, Literal):
        if term.datatype in _NUMERIC_TYPES:
            try:
                return float(term.lexical) if any(c in term.lexical for c in ".eEN") else int(term.lexical)
            except ValueError:
                return term.lexical
        return term.lexical
    return term


def _order_key(v):
    if v is None:
        return (0, 0)
    if isinstance(v, bool):
        return (1, int(v))
    if isinstance(v, (int, float, Decimal)):
        return (1, v)
    if isinstance(v, Literal):
        return (3, v.lexical, v.datatype)
    return (2, str(v))


class _Window:
    """Reference-counted triple graph with the indexes the matcher needs."""

    def __init__(self, relevance: Optional[dict]):
        self.counts: dict[tuple, int] = {}
        self.sp: dict[tuple, set] = {}
        self.po: dict[tuple, set] = {}
        self.p: dict[str, set] = {}
        # predicate -> list of (subject const, object const); None = accept all
        self.relevance = relevance

    def _relevant(self, s, p, o) -> bool:
        rel = self.relevance
        if rel is None:
            return True
        constraints = rel.get(p)
        if constraints is None:
            return False
        for cs, co in constraints:
            if (cs is None or cs == s) and (co is None or co == o):
                return True
        return False

    def add(self, triple: tuple) -> None:
        if not self._relevant(*triple):
            return
        n = self.counts.get(triple, 0)
        self.counts[triple] = n + 1
        if n:
            return
        s, p, o = triple
        self.sp.setdefault((s, p), set()).add(o)
        self.po.setdefault((p, o), set()).add(s)
        self.p.setdefault(p, set()).add((s, o))

    def remove(self, triple: tuple) -> None:
        n = self.counts.get(triple)
        if n is None:
            return
        if n > 1:
            self.counts[triple] = n - 1
            return
        del self.counts[triple]
        s, p, o = triple
        for index, key, member in ((self.sp, (s, p), o), (self.po, (p, o), s), (self.p, p, (s, o))):
            bucket = index[key]
            bucket.discard(member)
            if not bucket:
                del index[key]

    def match(self, s, p, o) -> Iterable[tuple]:
        """Triples matching a pattern where ``None`` is a wildcard."""
        if p is not None:
            if s is not None and o is not None:
                return ((s, p, o),) if (s, p, o) in self.counts else ()
            if s is not None:
                return ((s, p, x) for x in self.sp.get((s, p), ()))
            if o is not None:
                return ((x, p, o) for x in self.po.get((p, o), ()))
            return ((x, p, y) for x, y in self.p.get(p, ()))
        return (
            t for t in self.counts
            if (s is None or t[0] == s) and (o is None or t[2] == o)
        )

    def __len__(self) -> int:
        return len(self.counts)


def _relevance_map(q: ContinuousQuery) -> Optional[dict]:
    rel: dict[str, list] = {}
    for tp in q.patterns:
        if isinstance(tp.predicate, Var):
            return None
        cs = None if isinstance(tp.subject, Var) else tp.subject
        co = None if isinstance(tp.object, Var) else tp.object
        rel.setdefault(tp.predicate, []).append((cs, co))
    return rel


def _solutions(window: _Window, patterns: tuple) -> Iterable[dict]:
    """Backtracking join; the pattern with the most bound positions goes next."""

    def resolve(term, binding):
        if isinstance(term, Var):
            return binding.get(term)
        return term

    def step(remaining: list, binding: dict):
        if not remaining:
            yield binding
            return
        best_i, best_score = 0, -1
        for i, tp in enumerate(remaining):
            score = sum(
                (not isinstance(t, Var)) or (t in binding) for t in tp.terms()
            )
            if score > best_score:
                best_i, best_score = i, score
        tp = remaining[best_i]
        rest = remaining[:best_i] + remaining[best_i + 1:]
        terms = tp.terms()
        bound = [resolve(t, binding) for t in terms]
        for triple in window.match(*bound):
            new = binding
            ok = True
            for term, value in zip(terms, triple):
                if isinstance(term, Var):
                    have = new.get(term)
                    if have is None:
                        if new is binding:
                            new = dict(binding)
                        new[term] = value
                    elif have != value:
                        ok = False
                        break
            if ok:
                yield from step(rest, new)

    return step(list(patterns), {})


@dataclass(eq=False)
class QueryHandle:
    query: ContinuousQuery
    registration_time: int
    next_eval_time: int
    sink: Optional[Sink] = None
    tap: Optional[Sink] = None
    stream: Optional[StreamBuffer] = field(default=None, repr=False)
    seq: int = 0
    evaluations: int = 0
    busy_seconds: float = 0.0
    max_eval_seconds: float = 0.0
    _window: _Window = field(default=None, repr=False)  # type: ignore[assignment]
    _add_seq: int = 0
    _del_seq: int = 0

    @property
    def name(self) -> str:
        return self.query.name


class Engine:
    """Registry of streams and continuous queries driven by a virtual clock.

    ``workers > 1`` evaluates handles that fall due at the same instant on a
    thread pool; results are still delivered in registration order, so the
    output equals the single-threaded run.
    """

    def __init__(self, start_time: int = 0, workers: int = 1):
        self.now = start_time
        self.workers = workers
        self.streams: dict[str, StreamBuffer] = {}
        self.handles: dict[str, QueryHandle] = {}
        self._by_stream: dict[str, list[QueryHandle]] = {}
        self._heap: list[tuple[int, int, QueryHandle]] = []
        self._seq = 0
        self._pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- streams
    def add_stream(self, iri: str) -> StreamBuffer:
        buf = self.streams.get(iri)
        if buf is None:
            buf = self.streams[iri] = StreamBuffer(iri)
            self._by_stream[iri] = []
        return buf

    def ingest(self, stream_iri: str, triples: Iterable[TimestampedTriple]) -> None:
        buf = self.streams.get(stream_iri)
        if buf is None:
            raise UnknownStreamError(f"no stream registered as <{stream_iri}>")
        batches: list[tuple[int, list]] = []
        last = None
        for t in triples:
            ts = t.timestamp
            if last is not None and ts < last:
                raise LateEventError(f"batch is not time-ordered ({ts} after {last})")
            if batches and batches[-1][0] == ts:
                batches[-1][1].append((t.subject, t.predicate, t.object))
            else:
                batches.append((ts, [(t.subject, t.predicate, t.object)]))
            last = ts
        if not batches:
            return
        with buf.lock:
            first = batches[0][0]
            if first < buf.watermark:
                raise LateEventError(
                    f"timestamp {first} is behind the watermark {buf.watermark} of <{stream_iri}>"
                )
            if first <= buf.sealed:
                raise LateEventError(
                    f"timestamp {first} falls in an evaluation already run at {buf.sealed}"
                )
            for ts, group in batches:
                buf.append(ts, tuple(group))

    # -- registration
    def register_query(
        self,
        q: ContinuousQuery,
        sink: Optional[Sink] = None,
        *,
        tap: Optional[Sink] = None,
    ) -> QueryHandle:
        """Schedule ``q`` at ``now + step`` and every step after.

        ``sink`` receives ``(name, eval_time, rows)`` for HAVING-filtered rows;
        ``tap`` receives every group before HAVING.
        """
        if q.name in self.handles:
            raise AlreadyRegisteredError(f"query {q.name!r} is already registered")
        errors = [d for d in validate(q) if d.severity == "error"]
        if errors:
            raise EngineError(f"query {q.name!r} is invalid: {errors[0]}")
        buf = self.add_stream(q.stream_iri)
        h = QueryHandle(
            query=q,
            registration_time=self.now,
            next_eval_time=self.now + q.window.step_ms,
            sink=sink,
            tap=tap,
            stream=buf,
            seq=self._seq,
        )
        h._window = _Window(_relevance_map(q))
        h._add_seq = h._del_seq = buf.base_seq
        self._seq += 1
        self.handles[q.name] = h
        self._by_stream[buf.iri].append(h)
        heapq.heappush(self._heap, (h.next_eval_time, h.seq, h))
        return h

    def unregister(self, name: str) -> None:
        h = self.handles.pop(name)
        self._by_stream[h.stream.iri].remove(h)
        h.next_eval_time = -1  # invalidates heap entries

    # -- evaluation
    def _slide(self, h: QueryHandle, eval_time: int) -> None:
        buf, win = h.stream, h._window
        lo = eval_time - h.query.window.range_ms
        d, seq = h._del_seq, h._add_seq
        while d < seq:
            ts, triples = buf.entry(d)
            if ts > lo:
                break
            for tr in triples:
                win.remove(tr)
            d += 1
        end = buf.end_seq
        while seq < end:
            ts, triples = buf.entry(seq)
            if ts > eval_time:
                break
            if ts > lo:
                for tr in triples:
                    win.add(tr)
            else:
                # already expired on arrival; everything before it is gone too
                d = seq + 1
            seq += 1
        h._del_seq, h._add_seq = d, seq

    def _compute(self, h: QueryHandle, eval_time: int) -> tuple[list[ResultRow], list[ResultRow]]:
        q = h.query
        self._slide(h, eval_time)
        binds = q.binds
        group_by = q.group_by
        counts = q.aggregates
        samples = q.plain_vars
        groups: dict[tuple, list] = {}
        for sol in _solutions(h._window, q.patterns):
            if binds:
                sol = dict(sol)
                for b in binds:
                    lex = _numeric_lexical(sol.get(b.var))
                    value = _round_scaled(lex, b.factor) if lex is not None else None
                    if value is not None:
                        sol[b.target] = value
            key = tuple(sol.get(v) for v in group_by)
            acc = groups.get(key)
            if acc is None:
                acc = groups[key] = [[0 if not c.distinct else set() for c in counts],
                                     [None] * len(samples)]
            aggs, picked = acc
            for i, c in enumerate(counts):
                if c.var is None:
                    val = tuple(sorted(sol.items(), key=lambda kv: kv[0].name)) if c.distinct else True
                else:
                    val = sol.get(c.var)
                if val is None:
                    continue
                if c.distinct:
                    aggs[i].add(val)
                else:
                    aggs[i] += 1
            for i, v in enumerate(samples):
                val = sol.get(v)
                if val is not None and (picked[i] is None or _order_key(val) < _order_key(picked[i])):
                    picked[i] = val
        if not group_by and counts and not groups:
            groups[()] = [[0 if not c.distinct else set() for c in counts], [None] * len(samples)]

        rows: list[ResultRow] = []
        for key in sorted(groups, key=lambda k: tuple(_order_key(v) for v in k)):
            aggs, picked = groups[key]
            values = {
                c.alias.name: (len(a) if c.distinct else a) for c, a in zip(counts, aggs)
            }
            for v, s in zip(samples, picked):
                if v not in group_by:
                    values[v.name] = _value(s)
            group = {v.name: _value(k) for v, k in zip(group_by, key)}
            rows.append(ResultRow(eval_time, group, values))
        having = q.having
        if having is None:
            passed = rows
        else:
            passed = [r for r in rows if r.get(having.var.name) is not None
                      and having.test(r.get(having.var.name))]
        return rows, passed

    def _evaluate(self, h: QueryHandle, eval_time: int) -> tuple[list[ResultRow], list[ResultRow]]:
        started = time.perf_counter()
        all_rows, rows = self._compute(h, eval_time)
        elapsed = time.perf_counter() - started
        h.evaluations += 1
        h.busy_seconds += elapsed
        if elapsed > h.max_eval_seconds:
            h.max_eval_seconds = elapsed
        h.next_eval_time = eval_time + h.query.window.step_ms
        buf = h.stream
        with buf.lock:
            if eval_time > buf.sealed:
                buf.sealed = eval_time
        return all_rows, rows

    def evaluate_step(self, h: QueryHandle, eval_time: int) -> list[ResultRow]:
        """Evaluate ``h`` at its next scheduled time and return the alerting rows."""
        if h.name not in self.handles or self.handles[h.name] is not h:
            raise EngineError(f"query {h.name!r} is not registered")
        if eval_time != h.next_eval_time:
            raise NotDueError(
                f"query {h.name!r} is due at {h.next_eval_time}, not {eval_time}"
            )
        _, rows = self._evaluate(h, eval_time)
        heapq.heappush(self._heap, (h.next_eval_time, h.seq, h))
        return rows

    def advance_clock(self, to: int) -> list[tuple[QueryHandle, list[ResultRow]]]:
        """Run every evaluation due at or before ``to`` in time order."""
        if to < self.now:
            raise ClockError(f"clock cannot move back from {self.now} to {to}")
        out: list[tuple[QueryHandle, list[ResultRow]]] = []
        heap = self._heap
        while heap and heap[0][0] <= to:
            t = heap[0][0]
            due: list[QueryHandle] = []
            while heap and heap[0][0] == t:
                _, _, h = heapq.heappop(heap)
                if h.next_eval_time == t and self.handles.get(h.name) is h:
                    due.append(h)
            if not due:
                continue
            if self._pool is not None and len(due) > 1:
                results = list(self._pool.map(lambda h: self._evaluate(h, t), due))
            else:
                results = [self._evaluate(h, t) for h in due]
            for h, (all_rows, rows) in zip(due, results):
                if h.tap is not None:
                    h.tap(h.name, t, all_rows)
                if h.sink is not None:
                    h.sink(h.name, t, rows)
                out.append((h, rows))
                heapq.heappush(heap, (h.next_eval_time, h.seq, h))
            self._trim()
        self.now = to
        return out

    def _trim(self) -> None:
        for iri, handles in self._by_stream.items():
            if handles:
                self.streams[iri].trim(min(h._del_seq for h in handles))

    def buffered(self, stream_iri: str) -> int:
        """Number of timestamp batches currently held for a stream."""
        buf = self.streams[stream_iri]
        return buf.end_seq - buf.base_seq

    def window_size(self, name: str) -> int:
        return len(self.handles[name]._window)

    def oldest_in_window(self, name: str) -> Optional[int]:
        h = self.handles[name]
        if h._del_seq >= h._add_seq:
            return None
        return h.stream.entry(h._del_seq)[0]


RESULT_LOG_HEADER = "eval_time_ms,roundLat,roundLong,counter\n"


def write_result_log(
    rows: Iterable[ResultRow],
    out: TextIO,
    keys: tuple[str, str] = ("roundLat", "roundLong"),
    counter: str = "counter",
    header: bool = True,
) -> None:
    if header:
        out.write(RESULT_LOG_HEADER)
    for r in rows:
        out.write(f"{r.eval_time},{r[keys[0]]},{r[keys[1]]},{r[counter]}\n")
