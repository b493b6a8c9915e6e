"""
vclock.py
──────────────────────────────────────────────────────────────────────────────
Vector clocks and epochs for the streaming race analyses.

A VectorClock is a fixed-width int64 array indexed by dense thread index.
All operations return new clocks; analyzers never mutate a clock in place,
so a clock stored as a lock's last release or a variable's last write stays
a snapshot.
"""

from __future__ import annotations

from typing import Iterable, NamedTuple

import numpy as np


class Epoch(NamedTuple):
    """Time stamp `stamp` of thread `tid`, written tid#stamp."""

    tid: int
    stamp: int

    def __str__(self) -> str:
        return f"{self.tid}#{self.stamp}"


class VectorClock:
    __slots__ = ("stamps",)

    def __init__(self, stamps: Iterable[int]):
        arr = np.array(list(stamps), dtype=np.int64)
        if arr.ndim != 1:
            raise ValueError("a vector clock is one-dimensional")
        if (arr < 0).any():
            raise ValueError("time stamps are non-negative")
        self.stamps = arr

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "VectorClock":
        clock = cls.__new__(cls)
        clock.stamps = arr
        return clock

    @classmethod
    def zeros(cls, size: int) -> "VectorClock":
        return cls._wrap(np.zeros(size, dtype=np.int64))

    @classmethod
    def for_thread(cls, size: int, i: int) -> "VectorClock":
        """Initial clock of thread i: all zero except position i, which is 1."""
        if not 0 <= i < size:
            raise IndexError(f"thread index {i} outside clock of width {size}")
        arr = np.zeros(size, dtype=np.int64)
        arr[i] = 1
        return cls._wrap(arr)

    def __len__(self) -> int:
        return len(self.stamps)

    def __getitem__(self, j: int) -> int:
        return self.stamps.item(j)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, VectorClock):
            return NotImplemented
        return np.array_equal(self.stamps, other.stamps)

    __hash__ = None

    def __repr__(self) -> str:
        return f"VectorClock({self.to_list()})"

    def to_list(self) -> list[int]:
        return self.stamps.tolist()

    def join(self, other: "VectorClock") -> "VectorClock":
        if len(self) != len(other):
            raise ValueError(f"cannot join clocks of width {len(self)} and {len(other)}")
        return VectorClock._wrap(np.maximum(self.stamps, other.stamps))

    def inc(self, i: int) -> "VectorClock":
        if not 0 <= i < len(self):
            raise IndexError(f"thread index {i} outside clock of width {len(self)}")
        arr = self.stamps.copy()
        arr[i] += 1
        return VectorClock._wrap(arr)

    def leq(self, other: "VectorClock") -> bool:
        if len(self) != len(other):
            raise ValueError(f"cannot compare clocks of width {len(self)} and {len(other)}")
        return bool((self.stamps <= other.stamps).all())

    def epoch(self, i: int) -> Epoch:
        return Epoch(i, self[i])


def join(a: VectorClock, b: VectorClock) -> VectorClock:
    return a.join(b)


def inc(v: VectorClock, i: int) -> VectorClock:
    return v.inc(i)


def epoch_concurrent(e: Epoch, v: VectorClock) -> bool:
    """True when the event behind epoch `e` is not in the past of `v`."""
    return e.stamp > v.stamps.item(e.tid)
