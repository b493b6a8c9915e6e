"""
diagnosis.py
──────────────────────────────────────────────────────────────────────────────
Second phase: label every happens-before race as Guaranteed or Maybe.

The graph has one node per event and the edges collected in phase 1
(program-order successor and release -> acquire edges labelled HB,
write -> read candidate edges labelled W(read pos)). A race is Maybe when a
simple path connects its two events in either direction; for a write-read
race the direct candidate edge between the two events is left out of the
search. Otherwise it is Guaranteed: no choice of write-read dependencies
can order it.
"""

from __future__ import annotations

import logging
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

import networkx as nx
import numpy as np

from analyzers import HB, LabeledEdge, Phase1Result, RaceCategory, RacePair, run_sshb_phase1
from relations import Verdict
from trace_model import Event, Trace

logger = logging.getLogger(__name__)


class DiagGraph:
    def __init__(self, trace: Trace, edges: Iterable[LabeledEdge]):
        self.trace = trace
        self.graph = nx.DiGraph()
        self.graph.add_nodes_from(range(1, trace.n + 1))
        for edge in sorted(edges, key=lambda e: e.key):
            if not self.graph.has_edge(*edge.key):
                self.graph.add_edge(*edge.key, edge=edge)

    def __contains__(self, event: Event) -> bool:
        return 1 <= event.pos <= self.trace.n and self.trace.event(event.pos) == event

    def edges(self) -> list[LabeledEdge]:
        return [data["edge"] for _, _, data in self.graph.edges(data=True)]

    def edge(self, src: Event, dst: Event) -> Optional[LabeledEdge]:
        data = self.graph.get_edge_data(src.pos, dst.pos)
        return data["edge"] if data else None

    def wrd_in_degree(self, read: Event) -> int:
        return sum(1 for _, _, d in self.graph.in_edges(read.pos, data=True) if d["edge"].is_wrd)

    def hb_reaches(self, a: Event, b: Event) -> bool:
        hb_only = nx.subgraph_view(self.graph, filter_edge=lambda u, v: self.graph[u][v]["edge"].label == HB)
        return nx.has_path(hb_only, a.pos, b.pos)

    def with_edges(self, extra: Iterable[LabeledEdge]) -> "DiagGraph":
        return DiagGraph(self.trace, self.edges() + list(extra))


def build_graph(trace: Trace, phase1: Phase1Result) -> DiagGraph:
    return DiagGraph(trace, phase1.edges)


def path_exists(
    g: DiagGraph, src: Event, dst: Event, omit: Iterable[LabeledEdge] = ()
) -> Optional[list[Event]]:
    """Shortest (hence simple) path src -> dst avoiding `omit`, or None."""
    if src.pos == dst.pos:
        raise ValueError(f"path search needs two distinct events, got {src} twice")
    view = nx.restricted_view(g.graph, [], [e.key for e in omit])
    try:
        path = nx.shortest_path(view, src.pos, dst.pos)
    except nx.NetworkXNoPath:
        return None
    return [g.trace.event(p) for p in path]


def witness_is_feasible(g: DiagGraph, witness: list[Event]) -> bool:
    """Whether the candidate edges on `witness` can all hold at once.

    They can when, added to the HB edges, they do not close a cycle.
    """
    chosen = [(a.pos, b.pos) for a, b in zip(witness, witness[1:]) if g.graph[a.pos][b.pos]["edge"].is_wrd]
    hb_edges = [(u, v) for u, v, d in g.graph.edges(data=True) if d["edge"].label == HB]
    check = nx.DiGraph(hb_edges + chosen)
    return nx.is_directed_acyclic_graph(check)


@dataclass(frozen=True)
class Classification:
    pair: RacePair
    verdict: Verdict
    witness: Optional[tuple[Event, ...]] = None
    lockset_fp: bool = False
    witness_feasible: Optional[bool] = None


def classify_pair(g: DiagGraph, pair: RacePair, verify_witness: bool = False) -> Classification:
    a, b = pair.first, pair.second
    if a not in g or b not in g:
        raise KeyError(f"race {pair} does not belong to this graph")

    omit = []
    wr = pair.write_read()
    if wr is not None:
        direct = g.edge(*wr)
        if direct is not None and direct.is_wrd:
            omit.append(direct)

    witness = path_exists(g, a, b, omit) or path_exists(g, b, a, omit)
    if witness is None:
        return Classification(pair, Verdict.GUARANTEED)

    feasible = witness_is_feasible(g, witness) if verify_witness else None
    if feasible is False:
        logger.info("witness for %s needs write-read choices that form a cycle", pair)
    return Classification(pair, Verdict.MAYBE, tuple(witness), witness_feasible=feasible)


@dataclass
class DiagnosisReport:
    trace_meta: dict[str, int]
    classifications: list[Classification] = field(default_factory=list)
    wrd_avg: float = 0.0
    wrd_max: int = 0
    phase1_seconds: float = 0.0
    phase2_seconds: float = 0.0
    lockset_fp: Optional[int] = None

    @property
    def races(self) -> list[RacePair]:
        return [c.pair for c in self.classifications]

    def counts(self) -> dict[str, tuple[int, int]]:
        """(races, guaranteed) per category, plus "total"."""
        tally = Counter((c.pair.category.value, c.verdict is Verdict.GUARANTEED) for c in self.classifications)
        out = {}
        for cat in RaceCategory:
            x = tally[(cat.value, True)] + tally[(cat.value, False)]
            out[cat.value] = (x, tally[(cat.value, True)])
        out["total"] = (len(self.classifications), sum(g for _, g in out.values()))
        return out

    def summary(self) -> dict[str, str]:
        """Counts in X/G form: X race pairs, G of them guaranteed."""
        return {k: f"{x}/{g}" for k, (x, g) in self.counts().items()}


def wrd_statistics(g: DiagGraph) -> tuple[float, int]:
    """Average and maximum number of candidate edges per read that has any."""
    degrees = np.array([g.wrd_in_degree(r) for r in g.trace.reads()], dtype=np.int64)
    degrees = degrees[degrees > 0]
    if degrees.size == 0:
        return 0.0, 0
    return round(float(degrees.mean()), 2), int(degrees.max())


def diagnose_all(trace: Trace, jobs: int = 1, verify_witness: bool = False) -> DiagnosisReport:
    start = time.perf_counter()
    phase1 = run_sshb_phase1(trace)
    g = build_graph(trace, phase1)
    phase1_seconds = time.perf_counter() - start

    start = time.perf_counter()
    races = sorted(phase1.races, key=lambda p: p.key)
    if jobs > 1 and len(races) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            classifications = list(pool.map(lambda p: classify_pair(g, p, verify_witness), races))
    else:
        classifications = [classify_pair(g, p, verify_witness) for p in races]
    phase2_seconds = time.perf_counter() - start

    wrd_avg, wrd_max = wrd_statistics(g)
    logger.info("phase 1 %.3fs, phase 2 %.3fs, %d races", phase1_seconds, phase2_seconds, len(races))
    return DiagnosisReport(
        trace_meta=trace.meta(),
        classifications=classifications,
        wrd_avg=wrd_avg,
        wrd_max=wrd_max,
        phase1_seconds=phase1_seconds,
        phase2_seconds=phase2_seconds,
    )


def dedup_classifications(report: DiagnosisReport) -> DiagnosisReport:
    """Keep the first classification per unordered pair of code locations.

    A loop can put a guaranteed and a maybe race on the same two locations;
    only the earliest survives.
    """
    kept: dict[tuple[str, str], Classification] = {}
    for c in sorted(report.classifications, key=lambda c: c.pair.key):
        kept.setdefault(c.pair.loc_pair, c)
    return replace(report, classifications=list(kept.values()))
