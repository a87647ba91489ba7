"""Lightweight per-(rank, lane) counters and timers.

Each lane owns one CounterSet and is its only writer, so updates need no
locking; snapshots taken after the lanes have joined are exact.  Disabled
instrumentation swaps in a no-op recorder and changes no experiment output.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields


@dataclass
class CounterSet:
    envelopes_sent: int = 0
    envelopes_received: int = 0
    bytes_sent: int = 0
    bytes_received: int = 0
    accumulations_applied: int = 0
    wait_s: float = 0.0
    accumulate_s: float = 0.0
    total_s: float = 0.0

    def add(self, other: "CounterSet") -> None:
        for f in fields(self):
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "CounterSet":
        return cls(**{f.name: d.get(f.name, 0) for f in fields(cls)})


class LaneRecorder:
    """Single-writer recorder bound to one lane's CounterSet."""

    enabled = True

    def __init__(self, counters: CounterSet, clock):
        self.counters = counters
        self._clock = clock

    def sent(self, nbytes: int) -> None:
        self.counters.envelopes_sent += 1
        self.counters.bytes_sent += nbytes

    def received(self, nbytes: int) -> None:
        self.counters.envelopes_received += 1
        self.counters.bytes_received += nbytes

    def accumulated(self, seconds: float) -> None:
        self.counters.accumulations_applied += 1
        self.counters.accumulate_s += seconds

    def waited(self, seconds: float) -> None:
        self.counters.wait_s += seconds

    def now(self) -> float:
        return self._clock()

    def finish(self, started: float) -> None:
        self.counters.total_s = self._clock() - started


class NullRecorder:
    """Disabled instrumentation: every hook is a no-op and now() is constant."""

    enabled = False
    counters = None

    def sent(self, nbytes):
        pass

    def received(self, nbytes):
        pass

    def accumulated(self, seconds):
        pass

    def waited(self, seconds):
        pass

    def now(self):
        return 0.0

    def finish(self, started):
        pass


@dataclass
class CounterRegistry:
    """All lanes' counters for one experiment, keyed by (rank, lane)."""

    clock_label: str = "monotonic"
    lanes: dict = field(default_factory=dict)

    def register(self, rank: int, lane: int, counters: CounterSet) -> None:
        self.lanes[(rank, lane)] = counters

    def snapshot(self, scope: str = "global", rank: int | None = None,
                 lane: int | None = None) -> CounterSet:
        """Aggregate counters at lane, rank, or global scope."""
        out = CounterSet()
        for (r, t), c in self.lanes.items():
            if scope == "lane" and (r, t) != (rank, lane):
                continue
            if scope == "rank" and r != rank:
                continue
            out.add(c)
        return out

    def per_rank(self) -> dict[int, CounterSet]:
        ranks: dict[int, CounterSet] = {}
        for (r, _), c in self.lanes.items():
            ranks.setdefault(r, CounterSet()).add(c)
        return ranks
