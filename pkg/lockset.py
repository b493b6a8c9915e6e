"""
lockset.py
──────────────────────────────────────────────────────────────────────────────
Held-lock sets per access and the false-positive filter built on them.

A thread's held set depends only on that thread's own acquires and releases,
so it survives any tracing inaccuracy that keeps per-thread order. A
Guaranteed race whose two accesses share a held lock was most likely caused
by a mis-ordered release/acquire pair and gets flagged, not dropped.
"""

from __future__ import annotations

import logging
from dataclasses import replace

from diagnosis import DiagnosisReport
from relations import Verdict
from trace_model import Event, Trace

logger = logging.getLogger(__name__)

HeldLocks = frozenset[str]


def compute_locksets(trace: Trace) -> dict[int, HeldLocks]:
    """Map each read/write position to the locks its thread holds there."""
    held: dict[str, set[str]] = {}
    locksets: dict[int, HeldLocks] = {}
    for e in trace:
        mine = held.setdefault(e.tid, set())
        if e.is_acquire:
            mine.add(e.target)
        elif e.is_release:
            if e.target not in mine:
                logger.warning("%s releases %s at %d without holding it; skipped", e.tid, e.target, e.pos)
            mine.discard(e.target)
        else:
            locksets[e.pos] = frozenset(mine)
    return locksets


def held_at(locksets: dict[int, HeldLocks], event: Event) -> HeldLocks:
    return locksets.get(event.pos, frozenset())


def lockset_flags(report: DiagnosisReport, locksets: dict[int, HeldLocks]) -> DiagnosisReport:
    flagged = []
    for c in report.classifications:
        common = held_at(locksets, c.pair.first) & held_at(locksets, c.pair.second)
        fp = c.verdict is Verdict.GUARANTEED and bool(common)
        flagged.append(replace(c, lockset_fp=fp))
    count = sum(c.lockset_fp for c in flagged)
    if count:
        logger.info("%d guaranteed race(s) share a held lock", count)
    return replace(report, classifications=flagged, lockset_fp=count)
