"""
trace_model.py
──────────────────────────────────────────────────────────────────────────────
Events, traces, the CSV trace format and lock well-formedness checks.

File format, one event per line, `#` starts a comment line:

    pos,tid,OP,target[,loc[,gan]]

OP is RD / WR (read / write of a variable) or LK / UK (acquire / release of a
lock). Positions must run 1..n in file order. A location of `nil` or an empty
field means "no location".
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Iterator, Optional, Union

logger = logging.getLogger(__name__)

NIL_LOCATION = "nil"


class TraceError(ValueError):
    """Trace content that no analysis can work with."""


class TraceParseError(TraceError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class EventKind(str, Enum):
    READ = "RD"
    WRITE = "WR"
    ACQUIRE = "LK"
    RELEASE = "UK"

    @property
    def is_access(self) -> bool:
        return self in (EventKind.READ, EventKind.WRITE)

    @property
    def is_sync(self) -> bool:
        return not self.is_access


_SHORT_NAMES = {
    EventKind.READ: "r",
    EventKind.WRITE: "w",
    EventKind.ACQUIRE: "acq",
    EventKind.RELEASE: "rel",
}


@dataclass(frozen=True)
class Event:
    """One traced operation. `target` is a variable for accesses, a lock otherwise."""

    pos: int
    tid: str
    kind: EventKind
    target: str
    loc: Optional[str] = None
    gan: Optional[int] = None

    @property
    def is_read(self) -> bool:
        return self.kind is EventKind.READ

    @property
    def is_write(self) -> bool:
        return self.kind is EventKind.WRITE

    @property
    def is_access(self) -> bool:
        return self.kind.is_access

    @property
    def is_acquire(self) -> bool:
        return self.kind is EventKind.ACQUIRE

    @property
    def is_release(self) -> bool:
        return self.kind is EventKind.RELEASE

    @property
    def location(self) -> str:
        """Source location, or "tid:pos" when the tracer recorded none."""
        return self.loc if self.loc is not None else f"{self.tid}:{self.pos}"

    def conflicts_with(self, other: "Event") -> bool:
        return (
            self.is_access
            and other.is_access
            and self.target == other.target
            and self.tid != other.tid
            and (self.is_write or other.is_write)
        )

    def __str__(self) -> str:
        return f"{_SHORT_NAMES[self.kind]}({self.target})@{self.pos}"


@dataclass(frozen=True)
class Trace:
    """An immutable, position-checked list of events.

    Threads, variables and locks are interned in order of first appearance,
    so `thread_index[tid]` is the dense index vector clocks are built on.
    """

    events: tuple[Event, ...] = ()
    thread_ids: tuple[str, ...] = field(init=False, compare=False, repr=False)
    thread_index: dict[str, int] = field(init=False, compare=False, repr=False)
    variables: tuple[str, ...] = field(init=False, compare=False, repr=False)
    locks: tuple[str, ...] = field(init=False, compare=False, repr=False)
    _writes: dict[str, tuple[Event, ...]] = field(init=False, compare=False, repr=False)
    _reads: dict[str, tuple[Event, ...]] = field(init=False, compare=False, repr=False)
    _thread_prev: dict[int, Event] = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        events = tuple(self.events)
        object.__setattr__(self, "events", events)

        thread_index: dict[str, int] = {}
        variables: dict[str, None] = {}
        locks: dict[str, None] = {}
        writes: dict[str, list[Event]] = {}
        reads: dict[str, list[Event]] = {}
        last_in_thread: dict[str, Event] = {}
        thread_prev: dict[int, Event] = {}

        for expected, event in enumerate(events, start=1):
            if event.pos != expected:
                raise TraceError(f"event {event} sits at position {expected}; positions must run 1..n")
            thread_index.setdefault(event.tid, len(thread_index))
            if event.is_access:
                if event.target in locks:
                    raise TraceError(f"'{event.target}' is used both as a lock and as a variable")
                variables.setdefault(event.target)
                bucket = writes if event.is_write else reads
                bucket.setdefault(event.target, []).append(event)
            else:
                if event.target in variables:
                    raise TraceError(f"'{event.target}' is used both as a variable and as a lock")
                locks.setdefault(event.target)
            if event.tid in last_in_thread:
                thread_prev[event.pos] = last_in_thread[event.tid]
            last_in_thread[event.tid] = event

        object.__setattr__(self, "thread_ids", tuple(thread_index))
        object.__setattr__(self, "thread_index", thread_index)
        object.__setattr__(self, "variables", tuple(variables))
        object.__setattr__(self, "locks", tuple(locks))
        object.__setattr__(self, "_writes", {x: tuple(ws) for x, ws in writes.items()})
        object.__setattr__(self, "_reads", {x: tuple(rs) for x, rs in reads.items()})
        object.__setattr__(self, "_thread_prev", thread_prev)

    @classmethod
    def from_events(cls, events: Iterable[Event]) -> "Trace":
        """Build a trace from events in order, renumbering positions 1..n."""
        return cls(tuple(replace(e, pos=p) for p, e in enumerate(events, start=1)))

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    @property
    def n(self) -> int:
        return len(self.events)

    @property
    def thread_count(self) -> int:
        return len(self.thread_ids)

    def event(self, pos: int) -> Event:
        if not 1 <= pos <= len(self.events):
            raise IndexError(f"no event at position {pos}")
        return self.events[pos - 1]

    def tix(self, event: Event) -> int:
        return self.thread_index[event.tid]

    def writes_on(self, var: str) -> tuple[Event, ...]:
        return self._writes.get(var, ())

    def reads_on(self, var: str) -> tuple[Event, ...]:
        return self._reads.get(var, ())

    def reads(self) -> list[Event]:
        return [e for e in self.events if e.is_read]

    def accesses(self) -> list[Event]:
        return [e for e in self.events if e.is_access]

    def thread_predecessor(self, event: Event) -> Optional[Event]:
        return self._thread_prev.get(event.pos)

    def meta(self) -> dict[str, int]:
        reads = sum(1 for e in self.events if e.is_read)
        writes = sum(1 for e in self.events if e.is_write)
        return {
            "events": self.n,
            "threads": self.thread_count,
            "vars": len(self.variables),
            "locks": len(self.locks),
            "reads": reads,
            "writes": writes,
            "syncs": self.n - reads - writes,
        }


# --- Parsing / serialization ---

_OPS = {kind.value: kind for kind in EventKind}


def _parse_line(line_no: int, line: str) -> Event:
    fields = [f.strip() for f in line.split(",")]
    if not 4 <= len(fields) <= 6:
        raise TraceParseError(line_no, f"expected 4 to 6 comma-separated fields, got {len(fields)}")

    try:
        pos = int(fields[0])
    except ValueError:
        raise TraceParseError(line_no, f"position '{fields[0]}' is not an integer") from None

    tid, op, target = fields[1], fields[2], fields[3]
    if op not in _OPS:
        raise TraceParseError(line_no, f"unknown op code '{op}' (expected one of {', '.join(_OPS)})")
    if not tid or not target:
        raise TraceParseError(line_no, "thread id and target must be non-empty")

    loc = fields[4] if len(fields) > 4 else None
    if loc in ("", NIL_LOCATION):
        loc = None

    gan = None
    if len(fields) > 5 and fields[5]:
        try:
            gan = int(fields[5])
        except ValueError:
            raise TraceParseError(line_no, f"global access number '{fields[5]}' is not an integer") from None

    return Event(pos=pos, tid=tid, kind=_OPS[op], target=target, loc=loc, gan=gan)


def parse_trace(text: Union[str, Iterable[str]]) -> Trace:
    """Parse trace text (a string or an iterable of lines) into a Trace.

    Raises:
        TraceParseError: malformed line, unknown op code, duplicate or
            non-contiguous position.
        TraceError: a name used both as a lock and as a variable.
    """
    lines = text.splitlines() if isinstance(text, str) else text
    events: list[Event] = []
    seen: set[int] = set()

    for line_no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        event = _parse_line(line_no, line)
        if event.pos in seen:
            raise TraceParseError(line_no, f"duplicate position {event.pos}")
        if event.pos != len(events) + 1:
            raise TraceParseError(line_no, f"position {event.pos} breaks the 1..n sequence (expected {len(events) + 1})")
        seen.add(event.pos)
        events.append(event)

    trace = Trace(tuple(events))
    logger.debug("parsed %d events over %d threads", trace.n, trace.thread_count)
    return trace


def format_event(event: Event) -> str:
    fields = [str(event.pos), event.tid, event.kind.value, event.target]
    if event.gan is not None:
        fields += [event.loc if event.loc is not None else NIL_LOCATION, str(event.gan)]
    elif event.loc is not None:
        fields.append(event.loc)
    return ",".join(fields)


def serialize_trace(trace: Trace) -> str:
    return "".join(format_event(e) + "\n" for e in trace)


# --- Validation ---

class ValidityLevel(str, Enum):
    STRICT = "strict"
    LENIENT = "lenient"


@dataclass(frozen=True)
class Violation:
    pos: int
    rule: str
    message: str


@dataclass
class ValidationReport:
    level: ValidityLevel
    trace: Trace
    violations: list[Violation] = field(default_factory=list)
    inserted_releases: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations


def _check_locks(trace: Trace, level: ValidityLevel) -> tuple[list[Violation], list[Event]]:
    """Replay lock events. Returns violations and still-open acquires."""
    violations: list[Violation] = []
    held: dict[tuple[str, str], Event] = {}

    for e in trace:
        if e.is_acquire:
            if (e.tid, e.target) in held:
                violations.append(Violation(e.pos, "reacquire", f"{e.tid} acquires {e.target} while already holding it"))
                continue
            if level is ValidityLevel.STRICT:
                others = [tid for tid, lock in held if lock == e.target]
                if others:
                    violations.append(
                        Violation(e.pos, "overlap", f"{e.tid} acquires {e.target} while {others[0]} holds it")
                    )
            held[(e.tid, e.target)] = e
        elif e.is_release:
            if held.pop((e.tid, e.target), None) is None:
                violations.append(Violation(e.pos, "unmatched-release", f"{e.tid} releases {e.target} without holding it"))

    return violations, sorted(held.values(), key=lambda ev: ev.pos)


def validate(trace: Trace, level: ValidityLevel = ValidityLevel.STRICT, insert_dummy_releases: bool = False) -> ValidationReport:
    """Check lock well-formedness at the given level.

    With `insert_dummy_releases`, every acquire left open at the end of the
    trace gets a synthetic release appended (innermost first) and the repaired
    trace is what gets checked and returned.
    """
    violations, dangling = _check_locks(trace, level)
    inserted = 0

    if insert_dummy_releases and dangling:
        extra = [
            Event(pos=0, tid=acq.tid, kind=EventKind.RELEASE, target=acq.target)
            for acq in reversed(dangling)
        ]
        trace = Trace.from_events(list(trace) + extra)
        inserted = len(extra)
        logger.warning("inserted %d dummy release event(s) at the end of the trace", inserted)
        violations, dangling = _check_locks(trace, level)

    violations += [
        Violation(acq.pos, "dangling-acquire", f"{acq.tid} never releases {acq.target}") for acq in dangling
    ]
    violations.sort(key=lambda v: v.pos)
    return ValidationReport(level=level, trace=trace, violations=violations, inserted_releases=inserted)
