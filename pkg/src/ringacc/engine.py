"""Pipeline ring engine: per-measurement broadcast of each lane's payload
around its sub-ring, with buffer-swap reuse and an end-of-run cross-sub-ring
reduction.

Every measurement a lane (1) generates its payload and accumulates it
locally, (2) swaps it into the send buffer, then (3) for exactly S-1 steps
posts a receive from its left neighbor, sends to its right neighbor, waits
the receive, accumulates the received payload, waits the send, and swaps
send/receive buffers.  After S-1 steps every payload has updated every rank
of the sub-ring exactly once and sits at the left neighbor of its birth rank.

Lanes are independent rings: lane t tags its messages recv_tag + t, so the k
rings never cross.  Lanes of one rank share a single tensor slice under a
mutex; there is no inter-measurement barrier.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, ContractViolation, DeadlockError
from .instrument import CounterRegistry, CounterSet, LaneRecorder, NullRecorder
from .memory import AllocationTracker
from .tensor import (CombinedIndexSpace, GSigma, GtSlice, Origin,
                     accumulate_g4, fill_gsigma, make_partition)
from .wire import deserialize_gsigma_into, serialize_array, deserialize_array, serialize_gsigma

RECV_TAG = 1000
SEND_TAG = 1000  # a lane's send tag must equal its partner's recv tag
MAX_LANES = 1000  # lane tag offsets must stay below the tag stride

TAG_GATHER = 1 << 20
TAG_BLOB = (1 << 20) + 1


@dataclass(frozen=True)
class RingTopology:
    world_size: int
    subring_size: int
    lanes: int
    direction: str = "forward"

    def __post_init__(self):
        if self.subring_size < 1:
            raise ConfigError("subring size must be >= 1")
        if self.world_size % self.subring_size != 0:
            raise ConfigError(
                f"subring size {self.subring_size} does not divide world size "
                f"{self.world_size}")
        if not (1 <= self.lanes < MAX_LANES):
            raise ConfigError(f"lane count must be in [1, {MAX_LANES}), got {self.lanes}")
        if self.direction not in ("forward", "alternate"):
            raise ConfigError(f"unknown direction policy {self.direction!r}")

    def left(self, subring_rank: int) -> int:
        return (subring_rank - 1 + self.subring_size) % self.subring_size

    def right(self, subring_rank: int) -> int:
        return (subring_rank + 1) % self.subring_size


class LaneRing(NamedTuple):
    recv_from: int
    send_to: int
    tag: int


def lane_ring_id(topo: RingTopology, subring_rank: int, lane: int) -> LaneRing:
    """Neighbor and tag assignment for one lane's ring.

    Under the alternate policy odd lanes run the ring backwards; tags are
    offset by the lane index either way, so rings never cross.
    """
    if lane >= topo.lanes:
        raise ContractViolation(f"lane {lane} outside [0, {topo.lanes})")
    left, right = topo.left(subring_rank), topo.right(subring_rank)
    if topo.direction == "alternate" and lane % 2 == 1:
        left, right = right, left
    return LaneRing(recv_from=left, send_to=right, tag=RECV_TAG + lane)


def build_subrings(world, subring_size: int):
    """Consecutive ranks form each sub-ring: rank r joins color r // S with
    key r % S."""
    if world.size % subring_size != 0:
        raise ConfigError(
            f"subring size {subring_size} does not divide world size {world.size}")
    return world.split(world.rank // subring_size, world.rank % subring_size)


@dataclass
class LaneState:
    """One lane's three payload-sized buffers, exchanged by handle swap only."""

    lane: int
    gsigma: GSigma
    send: GSigma
    recv: GSigma
    alloc_count: int = 0
    ring_phase_allocs: int = 0
    isolation_violations: int = 0
    origins_accumulated: list = field(default_factory=list)

    @classmethod
    def create(cls, space: CombinedIndexSpace, lane: int,
               tracker: AllocationTracker, rank: int) -> "LaneState":
        bufs = []
        for _ in range(3):
            g = GSigma.empty(space)
            tracker.alloc(rank, g.nbytes)
            bufs.append(g)
        return cls(lane, bufs[0], bufs[1], bufs[2], alloc_count=3)


def run_measurement(topo: RingTopology, lane: LaneState, slice_: GtSlice, comm,
                    lock, rec, seed: int, meas_index: int, mode: str,
                    subring_id: int, world_rank: int, rt=None,
                    ring_steps: int | None = None, fault: str | None = None) -> None:
    """One measurement of the pipeline ring for one lane."""
    s = topo.subring_size
    origin = Origin(subring_id, comm.rank, lane.lane, meas_index, world_rank)
    fill_gsigma(lane.gsigma, seed, origin, mode)
    _accumulate(slice_, lane.gsigma, lock, rec, lane)
    lane.gsigma, lane.send = lane.send, lane.gsigma

    ring = lane_ring_id(topo, comm.rank, lane.lane)
    steps = s - 1 if ring_steps is None else ring_steps
    allocs_at_ring_start = lane.alloc_count
    for j in range(steps):
        if rt is not None:
            rt.annotate(rank=world_rank, lane=lane.lane, meas=meas_index, step=j)
        recv_op = comm.irecv(ring.recv_from, ring.tag)
        skip_send = fault == "skip-send" and j == 0
        if not skip_send:
            payload = serialize_gsigma(lane.send)
            send_op = comm.isend(ring.send_to, ring.tag, payload)
            rec.sent(len(payload))
        t0 = rec.now()
        try:
            data = recv_op.wait()
        except DeadlockError as exc:
            raise DeadlockError(
                f"rank {world_rank} lane {lane.lane} stalled at measurement "
                f"{meas_index} step {j}: {exc}",
                rank=world_rank, lane=lane.lane, step=j) from None
        rec.waited(rec.now() - t0)
        rec.received(len(data))
        deserialize_gsigma_into(lane.recv, data)
        if lane.recv.origin.lane != lane.lane:
            lane.isolation_violations += 1
        _accumulate(slice_, lane.recv, lock, rec, lane)
        if not skip_send:
            t0 = rec.now()
            send_op.wait()
            rec.waited(rec.now() - t0)
        lane.send, lane.recv = lane.recv, lane.send
    lane.ring_phase_allocs += lane.alloc_count - allocs_at_ring_start


def _accumulate(slice_: GtSlice, g: GSigma, lock, rec, lane: LaneState) -> None:
    t0 = rec.now()
    with lock:
        accumulate_g4(slice_, g)
    rec.accumulated(rec.now() - t0)
    if rec.enabled:
        o = g.origin
        lane.origins_accumulated.append((o.subring, o.rank, o.lane, o.meas, o.world_rank))


def _lane_main(rt, comm, topo, lane, rec, slice_, lock, cfg, world_rank) -> None:
    started = rec.now()
    subring_id = world_rank // topo.subring_size
    fault_here = cfg.fault if (world_rank == 0 and lane.lane == 0) else None
    for m in range(cfg.measurements):
        run_measurement(topo, lane, slice_, comm, lock, rec,
                        seed=cfg.seed, meas_index=m, mode=cfg.value_mode,
                        subring_id=subring_id, world_rank=world_rank, rt=rt,
                        ring_steps=cfg.ring_steps_override,
                        fault=fault_here if m == 0 else None)
    rec.finish(started)


@dataclass
class ExperimentReport:
    config: dict
    tensor: np.ndarray
    meas_counts: dict[int, int]
    lane_counters: dict[tuple[int, int], CounterSet]
    lane_meta: dict[tuple[int, int], dict]
    memory_peaks: dict[int, int]
    memory_series: list[tuple[float, int, int]]
    slices: dict[int, tuple[int, int]]
    elapsed_s: float
    clock: str

    def registry(self) -> CounterRegistry:
        reg = CounterRegistry(clock_label=self.clock)
        for key, c in self.lane_counters.items():
            reg.register(key[0], key[1], c)
        return reg

    def to_json_dict(self) -> dict:
        return {
            "config": self.config,
            "clock": self.clock,
            "elapsed_s": self.elapsed_s,
            "meas_counts": {str(r): n for r, n in sorted(self.meas_counts.items())},
            "slices": {str(r): list(v) for r, v in sorted(self.slices.items())},
            "counters_global": self.registry().snapshot("global").to_dict(),
            "counters": {f"{r}/{t}": c.to_dict()
                         for (r, t), c in sorted(self.lane_counters.items())},
            "lane_meta": {f"{r}/{t}": m
                          for (r, t), m in sorted(self.lane_meta.items())},
            "memory_peaks": {str(r): p for r, p in sorted(self.memory_peaks.items())},
            "memory_series": [list(e) for e in self.memory_series],
        }

    @classmethod
    def from_json_dict(cls, d: dict, tensor: np.ndarray) -> "ExperimentReport":
        def key2(s):
            r, t = s.split("/")
            return int(r), int(t)

        return cls(
            config=d["config"], tensor=tensor, clock=d["clock"],
            elapsed_s=d["elapsed_s"],
            meas_counts={int(r): n for r, n in d["meas_counts"].items()},
            slices={int(r): tuple(v) for r, v in d["slices"].items()},
            lane_counters={key2(k): CounterSet.from_dict(c)
                           for k, c in d["counters"].items()},
            lane_meta={key2(k): m for k, m in d["lane_meta"].items()},
            memory_peaks={int(r): p for r, p in d["memory_peaks"].items()},
            memory_series=[tuple(e) for e in d["memory_series"]],
        )


def rank_main(rt, world, cfg) -> ExperimentReport | None:
    """Everything one rank does; returns the assembled report on world rank 0."""
    r = world.rank
    s = cfg.subring_size
    space = CombinedIndexSpace(cfg.n_k, cfg.n_w)
    topo = RingTopology(cfg.world_size, s, cfg.lanes, cfg.direction)
    t_start = rt.now()
    tracker = AllocationTracker(clock=rt.now, enabled=cfg.instrument)

    sub = build_subrings(world, s)
    pos = world.split(r % s, r // s)  # same-position group across sub-rings

    plan = make_partition(space.size, s)
    lo, hi = plan.ranges[sub.rank]
    slice_ = GtSlice.zeros(space, lo, hi)
    tracker.alloc(r, slice_.nbytes)

    lock = rt.make_lock()
    lanes = [LaneState.create(space, t, tracker, r) for t in range(cfg.lanes)]
    recorders = [LaneRecorder(CounterSet(), rt.now) if cfg.instrument else NullRecorder()
                 for _ in range(cfg.lanes)]
    handles = [rt.spawn(_lane_main, rt, sub, topo, lanes[t], recorders[t],
                        slice_, lock, cfg, r, name=(r, t))
               for t in range(cfg.lanes)]
    rt.join(handles)

    reduced = pos.reduce_sum(slice_.data, root=0)

    blob = {
        "rank": r,
        "meas_count": slice_.meas_count,
        "slice": [lo, hi],
        "lanes": [{
            "lane": ls.lane,
            "counters": recorders[t].counters.to_dict() if cfg.instrument else None,
            "allocations": ls.alloc_count,
            "ring_phase_allocations": ls.ring_phase_allocs,
            "isolation_violations": ls.isolation_violations,
            "final_send_origin": [ls.send.origin.subring, ls.send.origin.rank,
                                  ls.send.origin.lane, ls.send.origin.meas,
                                  ls.send.origin.world_rank],
            "origins": ls.origins_accumulated,
        } for t, ls in enumerate(lanes)],
        "memory": {"peak": tracker.peak(r),
                   "series": [list(e) for e in tracker.series]},
    }
    world.isend(0, TAG_BLOB, json.dumps(blob).encode()).wait()
    if pos.rank == 0:
        world.isend(0, TAG_GATHER, serialize_array(reduced)).wait()
    if r != 0:
        return None

    parts = [deserialize_array(world.irecv(q, TAG_GATHER).wait()) for q in range(s)]
    full = np.concatenate(parts, axis=0)
    blobs = [json.loads(world.irecv(rr, TAG_BLOB).wait().decode())
             for rr in range(world.size)]
    return _assemble_report(cfg, full, blobs, rt.now() - t_start, rt.clock_label)


def _assemble_report(cfg, full, blobs, elapsed, clock) -> ExperimentReport:
    meas_counts, slices, peaks = {}, {}, {}
    lane_counters, lane_meta = {}, {}
    series: list[tuple[float, int, int]] = []
    for b in blobs:
        r = b["rank"]
        meas_counts[r] = b["meas_count"]
        slices[r] = tuple(b["slice"])
        peaks[r] = b["memory"]["peak"]
        series.extend(tuple(e) for e in b["memory"]["series"])
        for entry in b["lanes"]:
            key = (r, entry["lane"])
            if entry["counters"] is not None:
                lane_counters[key] = CounterSet.from_dict(entry["counters"])
            lane_meta[key] = {k: v for k, v in entry.items() if k != "counters"}
    series.sort(key=lambda e: (e[0], e[1]))
    return ExperimentReport(
        config=cfg.to_dict(), tensor=full, meas_counts=meas_counts,
        lane_counters=lane_counters, lane_meta=lane_meta,
        memory_peaks=peaks, memory_series=series, slices=slices,
        elapsed_s=elapsed, clock=clock)


def run_experiment(cfg) -> ExperimentReport:
    """Launch world_size logical ranks with k lanes each and assemble the
    reduced tensor plus counters at rank 0."""
    from .config import validate_config
    validate_config(cfg)
    if cfg.transport == "inprocess":
        return _run_inprocess(cfg)
    if cfg.transport == "sim":
        return _run_sim(cfg)
    if cfg.transport == "tcp":
        from .transport.tcp import run_tcp_experiment
        return run_tcp_experiment(cfg)
    raise ConfigError(f"unknown transport {cfg.transport!r}")


def _run_inprocess(cfg) -> ExperimentReport:
    from .transport.inprocess import InProcessHub, InProcessRuntime
    hub = InProcessHub(cfg.world_size, cfg.timeout_s)
    rt = InProcessRuntime()
    out: dict[int, ExperimentReport | None] = {}

    def entry(r):
        out[r] = rank_main(rt, hub.comm(r), cfg)

    handles = [rt.spawn(entry, r, name=(r, None)) for r in range(cfg.world_size)]
    rt.join(handles)
    return out[0]


def _run_sim(cfg) -> ExperimentReport:
    from .transport.sim import SimScheduler, SimRuntime, LinkScheduler, sim_world_comm
    sched = SimScheduler(LinkScheduler(cfg.link))
    rt = SimRuntime(sched)
    out: dict[int, ExperimentReport | None] = {}

    def entry(r):
        out[r] = rank_main(rt, sim_world_comm(sched, cfg.world_size, r), cfg)

    for r in range(cfg.world_size):
        sched.spawn(entry, r, name=(r, None))
    sched.run()
    return out[0]
