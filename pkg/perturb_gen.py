"""
perturb_gen.py
──────────────────────────────────────────────────────────────────────────────
Synthetic Strict-valid traces and the tracing-inaccuracy model.

gen_trace schedules random threads one event at a time. perturb mimics an
instrumentation that records events out of order: a random walk of adjacent
swaps between events of different threads, each swap allowed only if it
keeps what the chosen mode promises.

  rw  only unsynchronized reads/writes trade places; lock events keep their
      order, so the release-acquire order and every lockset are unchanged
  rr  additionally a release may be recorded late, after later events of
      other threads (including the next acquire of the same lock)
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

import numpy as np

from trace_model import Event, EventKind, Trace, ValidityLevel, validate

logger = logging.getLogger(__name__)


class GenConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GenConfig:
    threads: int = 2
    vars: int = 2
    locks: int = 1
    events: int = 20
    lock_discipline: float = 0.3
    ensure_initial_writes: bool = False
    seed: int = 0
    read_ratio: float = 0.5

    def check(self) -> None:
        if self.threads < 1:
            raise GenConfigError("threads must be at least 1")
        if self.events < 0:
            raise GenConfigError("events must be non-negative")
        if self.events > 0 and self.vars < 1:
            raise GenConfigError("a non-empty trace needs at least one variable")
        if self.locks < 0:
            raise GenConfigError("locks must be non-negative")
        if not 0.0 <= self.lock_discipline <= 1.0:
            raise GenConfigError("lock_discipline is a probability")
        if self.lock_discipline > 0 and self.locks == 0:
            raise GenConfigError("lock_discipline > 0 needs at least one lock")
        if not 0.0 <= self.read_ratio <= 1.0:
            raise GenConfigError("read_ratio is a probability")


def gen_trace(cfg: GenConfig) -> Trace:
    """Generate a Strict-valid trace of exactly cfg.events events.

    Each thread holds at most one lock at a time and only free locks are
    acquired. Slots for the closing releases are reserved so every critical
    section ends inside the trace.
    """
    cfg.check()
    rng = np.random.default_rng(cfg.seed)
    tids = [f"T{i + 1}" for i in range(cfg.threads)]
    var_names = [f"x{i + 1}" for i in range(cfg.vars)]
    lock_names = [f"m{i + 1}" for i in range(cfg.locks)]

    holding: dict[str, str] = {}
    touched: set[tuple[str, str]] = set()
    events: list[Event] = []

    def emit(tid: str, kind: EventKind, target: str) -> None:
        events.append(Event(pos=len(events) + 1, tid=tid, kind=kind, target=target))

    while len(events) < cfg.events:
        remaining = cfg.events - len(events)
        if remaining <= len(holding):
            tid = sorted(holding)[int(rng.integers(len(holding)))]
            emit(tid, EventKind.RELEASE, holding.pop(tid))
            continue

        tid = tids[int(rng.integers(len(tids)))]
        if tid in holding:
            if rng.random() < 0.35:
                emit(tid, EventKind.RELEASE, holding.pop(tid))
                continue
        else:
            free = [lk for lk in lock_names if lk not in holding.values()]
            # acquire, access, release, plus the releases already owed
            if free and remaining >= len(holding) + 3 and rng.random() < cfg.lock_discipline:
                lock = free[int(rng.integers(len(free)))]
                holding[tid] = lock
                emit(tid, EventKind.ACQUIRE, lock)
                continue

        var = var_names[int(rng.integers(len(var_names)))]
        first_touch = (tid, var) not in touched
        touched.add((tid, var))
        if cfg.ensure_initial_writes and first_touch:
            kind = EventKind.WRITE
        else:
            kind = EventKind.READ if rng.random() < cfg.read_ratio else EventKind.WRITE
        emit(tid, kind, var)

    return Trace(tuple(events))


class PerturbMode(str, Enum):
    RW = "rw"
    RR = "rr"


def swap_allowed(a: Event, b: Event, mode: PerturbMode) -> bool:
    """May `a` (immediately before `b`) be recorded after `b` instead?"""
    if a.tid == b.tid:
        return False
    if a.is_access and b.is_access:
        return True
    return mode is PerturbMode.RR and a.is_release


def perturb(trace: Trace, mode: PerturbMode, seed: int, swaps: Optional[int] = None) -> Trace:
    """Random walk of `swaps` attempted adjacent transpositions (default n)."""
    n = trace.n
    if n < 2:
        return trace
    if not validate(trace, ValidityLevel.STRICT).ok:
        logger.warning("perturbing a trace that is not Strict-valid")

    rng = np.random.default_rng(seed)
    events = list(trace)
    attempts = n if swaps is None else swaps
    done = 0
    for _ in range(attempts):
        i = int(rng.integers(n - 1))
        if swap_allowed(events[i], events[i + 1], mode):
            events[i], events[i + 1] = events[i + 1], events[i]
            done += 1
    logger.debug("perturb %s: %d of %d swaps applied", mode.value, done, attempts)
    return Trace(tuple(replace(e, pos=p) for p, e in enumerate(events, start=1)))
