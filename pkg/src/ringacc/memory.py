"""Closed-form allocation accounting and a live high-water-mark tracker.

The plan itemizes every tracked object per rank for both algorithms:

  original:     full G_t copy + 1 payload buffer per lane
  distributed:  1/p slice of G_t + 3 payload buffers per lane
                (payload itself, send buffer, receive buffer)

A payload buffer holds two spin matrices, so its size is 2 * matrix_bytes.
An alternate convention counting only send+receive buffers (2 per lane) is
reported alongside, never used in totals.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

from .errors import ContractViolation

BUFFERS_PER_LANE_ORIGINAL = 1
BUFFERS_PER_LANE_DISTRIBUTED = 3
BUFFERS_PER_LANE_ALTERNATE = 2  # send+recv only; shown as a labeled line item


def bytes_for_entries(entries: int, entry_bytes: int = 16) -> int:
    if entries < 0:
        raise ContractViolation(f"entry count must be >= 0, got {entries}")
    return entries * entry_bytes


def slice_bytes(total: int, p: int) -> int:
    """Largest balanced share of `total` split over p ranks."""
    if p < 1:
        raise ContractViolation(f"rank count must be >= 1, got {p}")
    return -(-total // p)  # ceil division


def gsigma_total_bytes(mode: str, k: int, matrix_bytes: float) -> float:
    """Per-rank payload-buffer total: matrix_bytes * 2 spins * buffers * k lanes."""
    if k < 1:
        raise ContractViolation(f"lane count must be >= 1, got {k}")
    if mode == "original":
        buffers = BUFFERS_PER_LANE_ORIGINAL
    elif mode == "distributed":
        buffers = BUFFERS_PER_LANE_DISTRIBUTED
    else:
        raise ContractViolation(f"unknown mode {mode!r}")
    return matrix_bytes * 2 * buffers * k


def gt_growth_ratio(l1: float, f1: float, l2: float, f2: float) -> float:
    """Storage growth factor under the cubic law in sites and frequencies."""
    if min(l1, f1, l2, f2) <= 0:
        raise ContractViolation("growth inputs must be positive")
    return (l2 / l1) ** 3 * (f2 / f1) ** 3


@dataclass(frozen=True)
class MemoryPlan:
    gt_bytes_total: int
    gt_bytes_per_rank: int
    gsigma_matrix_bytes: float
    p: int
    k: int
    buffers_per_lane: int
    gsigma_bytes_original: float
    gsigma_bytes_distributed: float
    gsigma_bytes_alternate: float
    original_total_per_rank: float
    distributed_total_per_rank: float
    break_even_k: float

    def to_dict(self) -> dict:
        return {
            "gt_bytes_total": self.gt_bytes_total,
            "gt_bytes_per_rank": self.gt_bytes_per_rank,
            "gsigma_matrix_bytes": self.gsigma_matrix_bytes,
            "p": self.p,
            "k": self.k,
            "buffers_per_lane": self.buffers_per_lane,
            "gsigma_bytes_original": self.gsigma_bytes_original,
            "gsigma_bytes_distributed": self.gsigma_bytes_distributed,
            "gsigma_bytes_alternate_2_per_lane": self.gsigma_bytes_alternate,
            "original_total_per_rank": self.original_total_per_rank,
            "distributed_total_per_rank": self.distributed_total_per_rank,
            "break_even_k": self.break_even_k,
        }


def make_plan(entries: int, entry_bytes: int, matrix_bytes: float, p: int, k: int) -> MemoryPlan:
    """Itemized per-rank plan; totals always equal the sum of their parts."""
    gt_total = bytes_for_entries(entries, entry_bytes)
    gt_rank = slice_bytes(gt_total, p)
    orig = gsigma_total_bytes("original", k, matrix_bytes)
    dist = gsigma_total_bytes("distributed", k, matrix_bytes)
    alt = matrix_bytes * 2 * BUFFERS_PER_LANE_ALTERNATE * k
    # distributed < original  <=>  gt*(p-1)/p > (3-1)*2*matrix*k
    extra_per_k = (BUFFERS_PER_LANE_DISTRIBUTED - BUFFERS_PER_LANE_ORIGINAL) * 2 * matrix_bytes
    saved = gt_total - gt_rank
    break_even = saved / extra_per_k if extra_per_k > 0 else float("inf")
    return MemoryPlan(
        gt_bytes_total=gt_total,
        gt_bytes_per_rank=gt_rank,
        gsigma_matrix_bytes=matrix_bytes,
        p=p,
        k=k,
        buffers_per_lane=BUFFERS_PER_LANE_DISTRIBUTED,
        gsigma_bytes_original=orig,
        gsigma_bytes_distributed=dist,
        gsigma_bytes_alternate=alt,
        original_total_per_rank=gt_total + orig,
        distributed_total_per_rank=gt_rank + dist,
        break_even_k=break_even,
    )


class AllocationTracker:
    """Live tracked-allocation series per rank (artifact-owned objects only).

    Thread-safe; timestamps come from the experiment clock (virtual under the
    simulated transport).
    """

    def __init__(self, clock=None, enabled: bool = True):
        self.enabled = enabled
        self._clock = clock or (lambda: 0.0)
        self._lock = threading.Lock()
        self._live: dict[int, int] = {}
        self._peak: dict[int, int] = {}
        self.series: list[tuple[float, int, int]] = []  # (time_s, rank, live_bytes)

    def alloc(self, rank: int, nbytes: int) -> None:
        if not self.enabled:
            return
        with self._lock:
            live = self._live.get(rank, 0) + nbytes
            self._live[rank] = live
            if live > self._peak.get(rank, 0):
                self._peak[rank] = live
            self.series.append((self._clock(), rank, live))

    def free(self, rank: int, nbytes: int) -> None:
        if not self.enabled:
            return
        with self._lock:
            live = self._live.get(rank, 0) - nbytes
            self._live[rank] = live
            self.series.append((self._clock(), rank, live))

    def peak(self, rank: int) -> int:
        return self._peak.get(rank, 0)

    def peaks(self) -> dict[int, int]:
        with self._lock:
            return dict(self._peak)
