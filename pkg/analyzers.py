"""
analyzers.py
──────────────────────────────────────────────────────────────────────────────
Single-pass vector clock race analyses over a trace:

  run_fasttrack      FastTrack with epochs, reports each racing event
  run_hb_partner     race pairs under happens-before
  run_shb_partner    race pairs under schedulable happens-before
                     (reads join the last write's clock)
  run_sshb_phase1    happens-before race pairs plus the edge set the
                     diagnosis graph is built from

All four share the thread / lock clock bookkeeping in VectorClockAnalysis.
cw(x) / cr(x) keep only the writes / reads of x that are concurrent with
each other, so their size never exceeds the thread count.
"""

from __future__ import annotations

import logging
from bisect import bisect_right
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional

from trace_model import Event, EventKind, Trace
from vclock import Epoch, VectorClock, epoch_concurrent

logger = logging.getLogger(__name__)


class RaceCategory(str, Enum):
    WW = "WW"
    WR = "WR"  # write comes first in the trace
    RW = "RW"  # read comes first in the trace


@dataclass(frozen=True)
class RacePair:
    first: Event
    second: Event
    category: RaceCategory

    @classmethod
    def of(cls, a: Event, b: Event) -> "RacePair":
        """Orient two conflicting accesses by trace position and categorize them."""
        if a.pos == b.pos:
            raise ValueError(f"an event does not race with itself: {a}")
        if not (a.is_access and b.is_access and a.target == b.target and (a.is_write or b.is_write)):
            raise ValueError(f"{a} and {b} are not conflicting accesses")
        first, second = (a, b) if a.pos < b.pos else (b, a)
        if first.is_write and second.is_write:
            category = RaceCategory.WW
        elif first.is_write:
            category = RaceCategory.WR
        else:
            category = RaceCategory.RW
        return cls(first, second, category)

    @property
    def key(self) -> tuple[int, int]:
        return (self.first.pos, self.second.pos)

    @property
    def loc_pair(self) -> tuple[str, str]:
        return tuple(sorted((self.first.location, self.second.location)))

    @property
    def variable(self) -> str:
        return self.first.target

    def write_read(self) -> Optional[tuple[Event, Event]]:
        """(write, read) for WR / RW pairs, None for write-write pairs."""
        if self.category is RaceCategory.WW:
            return None
        if self.first.is_write:
            return self.first, self.second
        return self.second, self.first

    def __str__(self) -> str:
        return f"({self.first}, {self.second}) {self.category.value}"


def dedup_by_location(pairs: Iterable[RacePair]) -> list[RacePair]:
    """Keep the earliest pair per unordered pair of code locations."""
    kept: dict[tuple[str, str], RacePair] = {}
    for pair in sorted(pairs, key=lambda p: p.key):
        kept.setdefault(pair.loc_pair, pair)
    return list(kept.values())


HB = "HB"


def wrd_label(read: Event) -> str:
    return f"W({read.pos})"


@dataclass(frozen=True)
class LabeledEdge:
    """Diagnosis graph edge: HB order, or write-read candidate W(read pos)."""

    src: Event
    dst: Event
    label: str

    @classmethod
    def hb(cls, src: Event, dst: Event) -> "LabeledEdge":
        return cls(src, dst, HB)

    @classmethod
    def wrd(cls, write: Event, read: Event) -> "LabeledEdge":
        if not (write.is_write and read.is_read and write.target == read.target):
            raise ValueError(f"{write} -> {read} is not a write-read candidate edge")
        return cls(write, read, wrd_label(read))

    @property
    def is_wrd(self) -> bool:
        return self.label != HB

    @property
    def key(self) -> tuple[int, int]:
        return (self.src.pos, self.dst.pos)

    def __str__(self) -> str:
        return f"{self.src} -> {self.dst} [{self.label}]"


@dataclass
class AnalyzerState:
    th: list[VectorClock]
    locks: dict[str, VectorClock] = field(default_factory=dict)
    last_write: dict[str, object] = field(default_factory=dict)
    cr: dict[str, dict[Epoch, Event]] = field(default_factory=dict)
    cw: dict[str, dict[Epoch, Event]] = field(default_factory=dict)
    races: dict[tuple[int, int], RacePair] = field(default_factory=dict)
    edges: dict[tuple[int, int], LabeledEdge] = field(default_factory=dict)
    epoch_to_event: dict[Epoch, Event] = field(default_factory=dict)
    max_cw: int = 0
    max_cr: int = 0

    @classmethod
    def initial(cls, thread_count: int) -> "AnalyzerState":
        return cls(th=[VectorClock.for_thread(thread_count, i) for i in range(thread_count)])

    def race_set(self) -> set[RacePair]:
        return set(self.races.values())

    def edge_set(self) -> set[LabeledEdge]:
        return set(self.edges.values())


class VectorClockAnalysis:
    """Event loop plus acquire / release handling shared by every analysis."""

    def __init__(self, trace: Trace):
        self.trace = trace
        self.state = AnalyzerState.initial(trace.thread_count)

    def run(self) -> AnalyzerState:
        handlers = {
            EventKind.READ: self.read,
            EventKind.WRITE: self.write,
            EventKind.ACQUIRE: self.acquire,
            EventKind.RELEASE: self.release,
        }
        for event in self.trace:
            i = self.trace.thread_index[event.tid]
            self.visit(i, event)
            handlers[event.kind](i, event)
        return self.state

    def visit(self, i: int, event: Event) -> None:
        pass

    def acquire(self, i: int, event: Event) -> None:
        lock_clock = self.state.locks.get(event.target)
        if lock_clock is not None:
            self.state.th[i] = self.state.th[i].join(lock_clock)

    def release(self, i: int, event: Event) -> None:
        self.state.locks[event.target] = self.state.th[i]
        self.state.th[i] = self.state.th[i].inc(i)

    def read(self, i: int, event: Event) -> None:
        raise NotImplementedError

    def write(self, i: int, event: Event) -> None:
        raise NotImplementedError

    def record_race(self, a: Event, b: Event) -> RacePair:
        pair = RacePair.of(a, b)
        self.state.races.setdefault(pair.key, pair)
        return pair


# --- FastTrack ---

@dataclass(frozen=True)
class FastTrackRace:
    event: Event
    clock: tuple[int, ...]
    pairs: tuple[RacePair, ...]


@dataclass
class FastTrackReport:
    detections: list[FastTrackRace] = field(default_factory=list)
    # every detection after the first may be an artifact of an earlier race
    sound_up_to_first_race: bool = True

    @property
    def first_race(self) -> Optional[FastTrackRace]:
        return self.detections[0] if self.detections else None

    def race_pairs(self) -> set[RacePair]:
        return {pair for d in self.detections for pair in d.pairs}


class FastTrack(VectorClockAnalysis):
    """Epoch-based FastTrack: LW(x) is one epoch, R(x) the concurrent reads."""

    def __init__(self, trace: Trace):
        super().__init__(trace)
        self.report = FastTrackReport()

    def _detect(self, event: Event, clock: VectorClock, conflicts: list[Event]) -> None:
        if conflicts:
            pairs = tuple(RacePair.of(c, event) for c in conflicts)
            self.report.detections.append(FastTrackRace(event, tuple(clock.to_list()), pairs))

    def _last_write_if_concurrent(self, x: str, clock: VectorClock) -> list[Event]:
        lw = self.state.last_write.get(x)
        if lw is not None and epoch_concurrent(lw, clock):
            return [self.state.epoch_to_event[lw]]
        return []

    def write(self, i: int, event: Event) -> None:
        clock = self.state.th[i]
        x = event.target
        conflicts = [r for ep, r in self.state.cr.get(x, {}).items() if epoch_concurrent(ep, clock)]
        conflicts += self._last_write_if_concurrent(x, clock)
        self._detect(event, clock, conflicts)

        ep = clock.epoch(i)
        self.state.last_write[x] = ep
        self.state.epoch_to_event[ep] = event
        self.state.th[i] = clock.inc(i)

    def read(self, i: int, event: Event) -> None:
        clock = self.state.th[i]
        x = event.target
        self._detect(event, clock, self._last_write_if_concurrent(x, clock))

        ep = clock.epoch(i)
        reads = {ep: event}
        reads.update((r_ep, r) for r_ep, r in self.state.cr.get(x, {}).items() if epoch_concurrent(r_ep, clock))
        self.state.cr[x] = reads
        self.state.max_cr = max(self.state.max_cr, len(reads))
        self.state.epoch_to_event[ep] = event
        self.state.th[i] = clock.inc(i)


# --- Race pair analyses ---

class HbPartner(VectorClockAnalysis):
    """Race pairs under happens-before (no write-read synchronization)."""

    def write(self, i: int, event: Event) -> None:
        st = self.state
        clock = st.th[i]
        x = event.target
        ep = clock.epoch(i)

        survivors = {ep: event}
        for w_ep, w in st.cw.get(x, {}).items():
            if epoch_concurrent(w_ep, clock):
                self.record_race(w, event)
                survivors[w_ep] = w
        st.cw[x] = survivors

        for r_ep, r in st.cr.get(x, {}).items():
            if epoch_concurrent(r_ep, clock):
                self.write_meets_read(event, r)

        self.wrote(i, event, clock)
        st.epoch_to_event[ep] = event
        st.max_cw = max(st.max_cw, len(survivors))
        st.th[i] = clock.inc(i)

    def read(self, i: int, event: Event) -> None:
        st = self.state
        clock = st.th[i]
        x = event.target
        ep = clock.epoch(i)

        for w_ep, w in st.cw.get(x, {}).items():
            if epoch_concurrent(w_ep, clock):
                self.read_meets_write(w, event)

        clock = self.observe(i, event, clock)
        survivors = {ep: event}
        survivors.update((r_ep, r) for r_ep, r in st.cr.get(x, {}).items() if epoch_concurrent(r_ep, clock))
        st.cr[x] = survivors

        st.epoch_to_event[ep] = event
        st.max_cr = max(st.max_cr, len(survivors))
        st.th[i] = clock.inc(i)

    def write_meets_read(self, write: Event, read: Event) -> None:
        self.record_race(read, write)

    def read_meets_write(self, write: Event, read: Event) -> None:
        self.record_race(write, read)

    def wrote(self, i: int, event: Event, clock: VectorClock) -> None:
        pass

    def observe(self, i: int, event: Event, clock: VectorClock) -> VectorClock:
        return clock


class ShbPartner(HbPartner):
    """HbPartner plus LW(x): a read joins the clock of the last write of x."""

    def wrote(self, i: int, event: Event, clock: VectorClock) -> None:
        self.state.last_write[event.target] = clock

    def observe(self, i: int, event: Event, clock: VectorClock) -> VectorClock:
        lw = self.state.last_write.get(event.target)
        return clock.join(lw) if lw is not None else clock


class SshbPhase1(HbPartner):
    """HbPartner that also collects the diagnosis graph edges.

    Edges: program-order successor, last release -> acquire (other thread),
    and write -> read candidate edges. Besides the candidate edges found
    through cw(x) / cr(x), every write gets an edge to the earliest read of
    each other thread that is concurrent with it; cr(x) forgets a read once
    a later read of its thread supersedes it, and that read must stay
    reachable from the write.
    """

    def __init__(self, trace: Trace):
        super().__init__(trace)
        self._last_in_thread: dict[int, Event] = {}
        self._last_release: dict[str, Event] = {}
        # var -> thread -> (read stamps, reads), stamps ascending
        self._read_log: dict[str, dict[int, tuple[list[int], list[Event]]]] = {}

    def add_edge(self, edge: LabeledEdge) -> None:
        self.state.edges.setdefault(edge.key, edge)

    def visit(self, i: int, event: Event) -> None:
        prev = self._last_in_thread.get(i)
        if prev is not None:
            self.add_edge(LabeledEdge.hb(prev, event))
        self._last_in_thread[i] = event

    def acquire(self, i: int, event: Event) -> None:
        super().acquire(i, event)
        rel = self._last_release.get(event.target)
        if rel is not None and rel.tid != event.tid:
            self.add_edge(LabeledEdge.hb(rel, event))

    def release(self, i: int, event: Event) -> None:
        super().release(i, event)
        self._last_release[event.target] = event

    def write_meets_read(self, write: Event, read: Event) -> None:
        super().write_meets_read(write, read)
        self.add_edge(LabeledEdge.wrd(write, read))

    def read_meets_write(self, write: Event, read: Event) -> None:
        super().read_meets_write(write, read)
        self.add_edge(LabeledEdge.wrd(write, read))

    def write(self, i: int, event: Event) -> None:
        clock = self.state.th[i]
        super().write(i, event)
        for j, (stamps, reads) in self._read_log.get(event.target, {}).items():
            if j == i:
                continue
            idx = bisect_right(stamps, clock[j])
            if idx < len(stamps):
                self.add_edge(LabeledEdge.wrd(event, reads[idx]))

    def read(self, i: int, event: Event) -> None:
        stamp = self.state.th[i][i]
        super().read(i, event)
        stamps, reads = self._read_log.setdefault(event.target, {}).setdefault(i, ([], []))
        stamps.append(stamp)
        reads.append(event)


@dataclass
class Phase1Result:
    races: set[RacePair]
    edges: set[LabeledEdge]
    state: AnalyzerState


def run_fasttrack(trace: Trace) -> FastTrackReport:
    analysis = FastTrack(trace)
    analysis.run()
    logger.debug("fasttrack: %d racing events", len(analysis.report.detections))
    return analysis.report


def run_hb_partner(trace: Trace) -> set[RacePair]:
    return HbPartner(trace).run().race_set()


def run_shb_partner(trace: Trace) -> set[RacePair]:
    return ShbPartner(trace).run().race_set()


def run_sshb_phase1(trace: Trace) -> Phase1Result:
    state = SshbPhase1(trace).run()
    logger.debug("sshb phase 1: %d race pairs, %d edges", len(state.races), len(state.edges))
    return Phase1Result(races=state.race_set(), edges=state.edge_set(), state=state)
