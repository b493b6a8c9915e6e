"""
relations.py
──────────────────────────────────────────────────────────────────────────────
Closure-based reference relations over a whole trace, used as the oracle for
the streaming analyses and the diagnosis graph:

  hb_relation / shb_relation     happens-before, schedulable happens-before
  wrd_candidates                 the writes a read may have observed
  strong_shb / enumerate_someshb orders built from write-read choices
  oracle_classify                Guaranteed / Maybe by exhaustive enumeration

Orders are networkx DAGs over event positions; `ordered(a, b)` is
reachability. Everything here is meant for small traces.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence, Union

import networkx as nx

from analyzers import RacePair
from trace_model import Event, Trace

logger = logging.getLogger(__name__)

DEFAULT_PRODUCT_CAP = 2**20
CLOSURE_LIMIT = 10_000

EventRef = Union[Event, int]


def _pos(e: EventRef) -> int:
    return e if isinstance(e, int) else e.pos


@dataclass(frozen=True)
class CycleWitness:
    events: tuple[Event, ...]

    def __str__(self) -> str:
        if not self.events:
            return "(empty cycle)"
        return " -> ".join(str(e) for e in self.events + (self.events[0],))


class CyclicRelation(ValueError):
    def __init__(self, witness: CycleWitness):
        super().__init__(f"relation is cyclic: {witness}")
        self.witness = witness


class CandidateProductTooLarge(RuntimeError):
    def __init__(self, size: int, cap: int):
        super().__init__(f"{size} write-read choice combinations exceed the cap of {cap}")
        self.size = size
        self.cap = cap


def _cycle_witness(trace: Trace, graph: nx.DiGraph) -> CycleWitness:
    cycle = [u for u, _ in nx.find_cycle(graph)]
    start = cycle.index(min(cycle))
    cycle = cycle[start:] + cycle[:start]
    return CycleWitness(tuple(trace.event(p) for p in cycle))


class PartialOrder:
    """Strict partial order given by generating edges between positions."""

    def __init__(self, trace: Trace, edges: Iterable[tuple[int, int]]):
        self.trace = trace
        self.graph = nx.DiGraph()
        self.graph.add_nodes_from(range(1, trace.n + 1))
        self.graph.add_edges_from(edges)
        if not nx.is_directed_acyclic_graph(self.graph):
            raise CyclicRelation(_cycle_witness(trace, self.graph))
        self._descendants: dict[int, set[int]] = {}

    @property
    def n(self) -> int:
        return self.trace.n

    def _reach(self, p: int) -> set[int]:
        if p not in self._descendants:
            self._descendants[p] = nx.descendants(self.graph, p)
        return self._descendants[p]

    def ordered(self, a: EventRef, b: EventRef) -> bool:
        """a < b in this order."""
        return _pos(b) in self._reach(_pos(a))

    def unsynchronized(self, a: EventRef, b: EventRef) -> bool:
        return _pos(a) != _pos(b) and not self.ordered(a, b) and not self.ordered(b, a)

    def reaches(self, a: EventRef, b: EventRef, omit: Optional[tuple[int, int]] = None) -> bool:
        """a < b without using the generating edge `omit`."""
        if omit is None or not self.graph.has_edge(*omit):
            return self.ordered(a, b)
        view = nx.restricted_view(self.graph, [], [omit])
        return nx.has_path(view, _pos(a), _pos(b))

    def closure_pairs(self) -> set[tuple[int, int]]:
        if self.n > CLOSURE_LIMIT:
            raise ValueError(f"closure table for {self.n} events exceeds the limit of {CLOSURE_LIMIT}")
        return set(nx.transitive_closure_dag(self.graph).edges())

    def with_edges(self, edges: Iterable[tuple[int, int]]) -> "PartialOrder":
        return PartialOrder(self.trace, list(self.graph.edges()) + list(edges))


# --- HB / SHB ---

def po_edges(trace: Trace) -> list[tuple[int, int]]:
    return [(prev.pos, e.pos) for e in trace if (prev := trace.thread_predecessor(e)) is not None]


def rad_edges(trace: Trace) -> list[tuple[int, int]]:
    """rel(y)@j -> acq(y)@k for the first acquire of y after j by another thread.

    Acquires of y by the releasing thread itself do not block the edge.
    """
    edges = []
    pending: dict[str, list[Event]] = {}
    for e in trace:
        if e.is_release:
            pending.setdefault(e.target, []).append(e)
        elif e.is_acquire:
            waiting = pending.get(e.target, [])
            edges += [(rel.pos, e.pos) for rel in waiting if rel.tid != e.tid]
            pending[e.target] = [rel for rel in waiting if rel.tid == e.tid]
    return edges


def hb_edges(trace: Trace) -> list[tuple[int, int]]:
    return po_edges(trace) + rad_edges(trace)


def last_write_edges(trace: Trace) -> list[tuple[int, int]]:
    """Each read's nearest preceding write of the same variable."""
    edges = []
    last: dict[str, Event] = {}
    for e in trace:
        if e.is_write:
            last[e.target] = e
        elif e.is_read and e.target in last:
            edges.append((last[e.target].pos, e.pos))
    return edges


def hb_relation(trace: Trace) -> PartialOrder:
    return PartialOrder(trace, hb_edges(trace))


def shb_relation(trace: Trace) -> PartialOrder:
    return PartialOrder(trace, hb_edges(trace) + last_write_edges(trace))


# --- Write-read candidates ---

@dataclass(frozen=True)
class WrdCandidates:
    read: Event
    w1: tuple[Event, ...]  # unordered with the read
    w2: tuple[Event, ...]  # ordered before the read

    @property
    def all(self) -> tuple[Event, ...]:
        return tuple(sorted(self.w1 + self.w2, key=lambda e: e.pos))


def _maximal(order: PartialOrder, events: Sequence[Event]) -> tuple[Event, ...]:
    return tuple(w for w in events if not any(order.ordered(w, other) for other in events if other is not w))


def wrd_candidates(trace: Trace, hb: PartialOrder, read: Event) -> WrdCandidates:
    if not read.is_read:
        raise ValueError(f"{read} is not a read")
    writes = trace.writes_on(read.target)
    unordered = [w for w in writes if hb.unsynchronized(w, read)]
    before = [w for w in writes if hb.ordered(w, read)]
    return WrdCandidates(read, _maximal(hb, unordered), _maximal(hb, before))


def prune_candidates(c: WrdCandidates, hb: PartialOrder) -> WrdCandidates:
    """Drop synchronized candidates that happen before an unsynchronized one."""
    kept = tuple(g for g in c.w2 if not any(hb.ordered(g, f) for f in c.w1))
    return WrdCandidates(c.read, c.w1, kept)


def has_initial_write(trace: Trace, hb: PartialOrder, read: Event) -> bool:
    return bool(wrd_candidates(trace, hb, read).w2)


def all_candidates(trace: Trace, hb: PartialOrder) -> dict[int, WrdCandidates]:
    return {r.pos: wrd_candidates(trace, hb, r) for r in trace.reads()}


def strong_shb(trace: Trace, hb: Optional[PartialOrder] = None) -> Union[PartialOrder, CycleWitness]:
    """hb plus every candidate edge of every read, or the cycle that prevents it."""
    hb = hb or hb_relation(trace)
    edges = [(w.pos, c.read.pos) for c in all_candidates(trace, hb).values() for w in c.all]
    try:
        return hb.with_edges(edges)
    except CyclicRelation as err:
        return err.witness


@dataclass
class SomeShbInstance:
    choice: dict[int, Event]  # read pos -> chosen write
    order: PartialOrder


def candidate_product_size(candidates: dict[int, WrdCandidates]) -> int:
    return math.prod(len(c.all) for c in candidates.values() if c.all)


def enumerate_someshb(
    trace: Trace, cap: int = DEFAULT_PRODUCT_CAP, hb: Optional[PartialOrder] = None
) -> list[SomeShbInstance]:
    """Every acyclic order obtained by choosing one candidate write per read.

    Reads without any candidate (the variable is never written) observe the
    initial value and add no edge.
    """
    hb = hb or hb_relation(trace)
    candidates = {pos: c for pos, c in all_candidates(trace, hb).items() if c.all}
    size = candidate_product_size(candidates)
    if size > cap:
        raise CandidateProductTooLarge(size, cap)

    reads = sorted(candidates)
    instances = []
    for combo in itertools.product(*(candidates[pos].all for pos in reads)):
        choice = dict(zip(reads, combo))
        try:
            order = hb.with_edges((w.pos, r) for r, w in choice.items())
        except CyclicRelation:
            continue
        instances.append(SomeShbInstance(choice, order))
    logger.debug("someshb: %d of %d choices acyclic", len(instances), size)
    return instances


# --- Oracle verdicts ---

class Verdict(str, Enum):
    GUARANTEED = "Guaranteed"
    MAYBE = "Maybe"
    NOT_AN_HB_RACE = "NotAnHbRace"


def oracle_classify(
    trace: Trace,
    pair: RacePair,
    instances: Optional[list[SomeShbInstance]] = None,
    hb: Optional[PartialOrder] = None,
) -> Verdict:
    """Maybe iff some acyclic write-read choice orders the pair.

    For a write-read pair the instance's own choice of that write for that
    read does not count; the pair must be ordered some other way.
    """
    hb = hb or hb_relation(trace)
    a, b = pair.first, pair.second
    if not hb.unsynchronized(a, b):
        return Verdict.NOT_AN_HB_RACE
    if instances is None:
        instances = enumerate_someshb(trace, hb=hb)

    wr = pair.write_read()
    for inst in instances:
        omit = None
        if wr is not None and inst.choice.get(wr[1].pos) == wr[0]:
            omit = (wr[0].pos, wr[1].pos)
        if inst.order.reaches(a, b, omit) or inst.order.reaches(b, a, omit):
            return Verdict.MAYBE
    return Verdict.GUARANTEED


def frontier_race_pairs(trace: Trace, order: PartialOrder, pre_join_reads: bool = False) -> set[tuple[int, int]]:
    """Race pairs (by position) as the streaming pair analyses report them.

    Each access races the order-maximal earlier writes of its variable it is
    unordered with; a write also races the order-maximal earlier reads. With
    `pre_join_reads` a read is judged by what its thread knew before the read
    (reads check races before joining the last write's clock).
    """
    pairs: set[tuple[int, int]] = set()

    def known_before(a: Event, e: Event) -> bool:
        if e.is_read and pre_join_reads:
            prev = trace.thread_predecessor(e)
            return prev is not None and (a == prev or order.ordered(a, prev))
        return order.ordered(a, e)

    for e in trace.accesses():
        earlier_writes = [w for w in trace.writes_on(e.target) if w.pos < e.pos]
        for w in _maximal(order, earlier_writes):
            if not known_before(w, e):
                pairs.add((w.pos, e.pos))
        if e.is_write:
            earlier_reads = [r for r in trace.reads_on(e.target) if r.pos < e.pos]
            for r in _maximal(order, earlier_reads):
                if not order.ordered(r, e):
                    pairs.add((r.pos, e.pos))
    return pairs
