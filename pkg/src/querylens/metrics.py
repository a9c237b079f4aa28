"""Latency recording with nearest-rank percentiles.

Percentile definition: P(q) is the ceil(q*n)-th smallest of n samples.
Recording is lock-guarded so concurrent request handlers can share one
recorder; each stage keeps a bounded ring of recent samples.
"""

from __future__ import annotations

import math
import threading
from typing import Sequence

from .exceptions import NoSamplesError

DEFAULT_CAPACITY = 65536


def nearest_rank(samples: Sequence[float], q: float) -> float:
    """The ceil(q*n)-th smallest sample, 0 < q <= 1."""
    if not 0.0 < q <= 1.0:
        raise ValueError(f"q must lie in (0, 1], got {q}")
    n = len(samples)
    if n == 0:
        raise NoSamplesError("no samples recorded")
    # Rounding kills float dust in q*n (0.2*15 -> 3.0000000000000004) without
    # moving genuine fractional ranks.
    rank = math.ceil(round(q * n, 9))
    return sorted(samples)[rank - 1]


class _Ring:
    __slots__ = ("buf", "capacity", "next", "full")

    def __init__(self, capacity: int):
        self.buf: list[float] = []
        self.capacity = capacity
        self.next = 0
        self.full = False

    def push(self, value: float) -> None:
        if self.full:
            self.buf[self.next] = value
            self.next = (self.next + 1) % self.capacity
        else:
            self.buf.append(value)
            if len(self.buf) == self.capacity:
                self.full = True

    def values(self) -> list[float]:
        return list(self.buf)


class LatencyRecorder:
    """Per-stage duration samples in milliseconds, bounded per stage."""

    def __init__(self, capacity: int = DEFAULT_CAPACITY):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self._capacity = capacity
        self._lock = threading.Lock()
        self._stages: dict[str, _Ring] = {}

    def record(self, stage: str, duration_ms: float) -> None:
        with self._lock:
            ring = self._stages.get(stage)
            if ring is None:
                ring = self._stages[stage] = _Ring(self._capacity)
            ring.push(duration_ms)

    def samples(self, stage: str) -> list[float]:
        with self._lock:
            ring = self._stages.get(stage)
            return ring.values() if ring else []

    def stages(self) -> list[str]:
        with self._lock:
            return list(self._stages)

    def percentile(self, stage: str, q: float) -> float:
        return nearest_rank(self.samples(stage), q)

    def snapshot(self) -> dict[str, dict[str, float | int]]:
        """Current count and P50/P95/P99 per stage."""
        out: dict[str, dict[str, float | int]] = {}
        for stage in self.stages():
            samples = self.samples(stage)
            if not samples:
                continue
            out[stage] = {
                "count": len(samples),
                "p50_ms": nearest_rank(samples, 0.50),
                "p95_ms": nearest_rank(samples, 0.95),
                "p99_ms": nearest_rank(samples, 0.99),
            }
        return out
