"""Parse the original detection query and run it over a handful of events.

Shows the canonical printer, the warning about the ungrouped ?lat ?long
projection, and where the HAVING threshold bites.
"""

from importlib import resources

from lostsilence.engine import Engine
from lostsilence.model import STREAM_IRI, Status, StatusEvent, encode_event
from lostsilence.rsp_query import format_query, parse_query, validate

text = (resources.files("lostsilence") / "queries" / "listing1.rsq").read_text()
q = parse_query(text)
print(format_query(q))
for d in validate(q, warnings=True):
    print("note:", d)

engine = Engine()
handle = engine.register_query(q)

# ten phones go quiet in one pixel, then an eleventh
for i in range(10):
    engine.ingest(STREAM_IRI, encode_event(StatusEvent(f"p{i}", 329.8631, 246.7922, Status.UNREACHABLE, 1_000 + i)))
print("step 1 rows:", engine.evaluate_step(handle, 5_000))

engine.ingest(STREAM_IRI, encode_event(StatusEvent("p10", 329.8629, 246.7918, Status.UNREACHABLE, 6_000)))
for row in engine.evaluate_step(handle, 10_000):
    print(f"step 2 alert: pixel ({row['roundLat']}, {row['roundLong']}) counter {row['counter']}")
