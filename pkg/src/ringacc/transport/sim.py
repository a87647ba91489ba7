"""Deterministic simulated-time transport.

Links are FIFO servers over a virtual clock.  Ordered rank pairs on the same
node get a dedicated link at the intra-node bandwidth; pairs crossing nodes
share the two endpoint NICs, each modeled as one bidirectional resource per
node (a crossing message occupies both its NICs for its full service time, so
a ring step loads each boundary NIC with one egress plus one ingress).  A
message's per-hop latency is propagation, charged after service, off-link.

Queued messages start greedily in submission order whenever all their
resources are idle; ties are broken by (time, source, dest, tag, seq), which
makes every run bitwise reproducible.

Two drivers share the scheduler: `SimScheduler` runs real engine contexts in
lockstep for full-payload experiments, and `simulate_ring_traffic` replays the
engine's communication skeleton with size-only payloads for large sweeps.

Modeling assumption (not a measured fact): the NIC shares fairly, FIFO, across
all lanes of a rank.
"""

from __future__ import annotations

import heapq
import threading
from collections import deque
from dataclasses import dataclass

from ..errors import ConfigError, ContractViolation, DeadlockError
from .base import Communicator, PendingOp, Runtime


@dataclass(frozen=True)
class SimLinkConfig:
    """Link parameters; bandwidths in bytes/second, latency in seconds."""

    nic_bandwidth: float = 12.5e9
    intra_bandwidth: float = 25e9
    latency: float = 5e-6
    ranks_per_node: int = 6

    def __post_init__(self):
        if self.nic_bandwidth <= 0 or self.intra_bandwidth <= 0:
            raise ConfigError("link bandwidths must be strictly positive")
        if self.latency <= 0:
            raise ConfigError("link latency must be strictly positive")
        if self.ranks_per_node < 1:
            raise ConfigError("ranks_per_node must be >= 1")

    def node_of(self, world_rank: int) -> int:
        return world_rank // self.ranks_per_node

    def link_class(self, src: int, dst: int) -> str:
        return "intra" if self.node_of(src) == self.node_of(dst) else "nic"

    def to_dict(self) -> dict:
        return {"nic_bandwidth": self.nic_bandwidth,
                "intra_bandwidth": self.intra_bandwidth,
                "latency": self.latency,
                "ranks_per_node": self.ranks_per_node}


class _Msg:
    __slots__ = ("src", "dst", "tag", "nbytes", "t_submit", "t_start", "t_end",
                 "nodes", "started", "cb")

    def __init__(self, src, dst, tag, nbytes, t_submit, cb):
        self.src = src
        self.dst = dst
        self.tag = tag
        self.nbytes = nbytes
        self.t_submit = t_submit
        self.t_start = None
        self.t_end = None
        self.nodes = None
        self.started = False
        self.cb = cb


_END, _DELIVER = 0, 1


class LinkScheduler:
    """Event-driven virtual-time core shared by both sim drivers."""

    def __init__(self, link: SimLinkConfig, record_events: bool = False):
        self.link = link
        self.now = 0.0
        self._heap: list = []
        self._seq = 0
        self._pair_free: dict[tuple[int, int], float] = {}
        self._nic_busy: dict[int, _Msg | None] = {}
        self._nic_wait: dict[int, deque] = {}
        self.events: list[dict] | None = [] if record_events else None

    def _push(self, t: float, action: int, msg: _Msg) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (t, msg.src, msg.dst, msg.tag, self._seq, action, msg))

    def submit(self, src: int, dst: int, tag: int, nbytes: int, cb, t: float) -> _Msg:
        """Enqueue one message at virtual time t; cb(msg, t_deliver) fires on delivery."""
        msg = _Msg(src, dst, tag, nbytes, t, cb)
        link = self.link
        if link.link_class(src, dst) == "intra":
            dur = nbytes / link.intra_bandwidth
            key = (src, dst)
            start = max(t, self._pair_free.get(key, 0.0))
            end = start + dur
            self._pair_free[key] = end
            msg.t_start, msg.t_end = start, end
            self._push(end + link.latency, _DELIVER, msg)
        else:
            msg.nodes = (link.node_of(src), link.node_of(dst))
            a, b = msg.nodes
            if self._nic_busy.get(a) is None and self._nic_busy.get(b) is None:
                self._start_nic(msg, t)
            else:
                self._nic_wait.setdefault(a, deque()).append(msg)
                self._nic_wait.setdefault(b, deque()).append(msg)
        return msg

    def _start_nic(self, msg: _Msg, t: float) -> None:
        a, b = msg.nodes
        self._nic_busy[a] = msg
        self._nic_busy[b] = msg
        msg.started = True
        msg.t_start = t
        msg.t_end = t + msg.nbytes / self.link.nic_bandwidth
        self._push(msg.t_end, _END, msg)

    def _drain_nic_queue(self, node: int, t: float) -> None:
        q = self._nic_wait.get(node)
        if not q:
            return
        # start, in submission order, every waiting message whose resources
        # are all idle (work-conserving: later messages may start around a
        # blocked head whose other NIC is busy)
        pending = []
        while q:
            m = q.popleft()
            if m.started:
                continue
            a, b = m.nodes
            if self._nic_busy.get(a) is None and self._nic_busy.get(b) is None:
                self._start_nic(m, t)
            else:
                pending.append(m)
        q.extend(pending)

    def step(self):
        """Process one event; returns (msg, t) for a delivery, else None."""
        t, _, _, _, _, action, msg = heapq.heappop(self._heap)
        self.now = t
        if action == _END:
            a, b = msg.nodes
            self._nic_busy[a] = None
            self._nic_busy[b] = None
            self._push(t + self.link.latency, _DELIVER, msg)
            self._drain_nic_queue(a, t)
            self._drain_nic_queue(b, t)
            return None
        if self.events is not None:
            self.events.append({
                "src": msg.src, "dst": msg.dst, "tag": msg.tag,
                "nbytes": msg.nbytes, "t_submit": msg.t_submit,
                "t_start": msg.t_start, "t_end": msg.t_end, "t_deliver": t,
                "link": self.link.link_class(msg.src, msg.dst)})
        return msg, t

    def step_until_delivery(self):
        while self._heap:
            out = self.step()
            if out is not None:
                return out
        return None

    def run_all(self) -> None:
        while self._heap:
            out = self.step()
            if out is not None:
                msg, t = out
                msg.cb(msg, t)

    @property
    def pending(self) -> bool:
        return bool(self._heap)


# --- full-fidelity driver: real engine contexts in deterministic lockstep ----

class _SimContext:
    def __init__(self, cid, name, fn, args):
        self.cid = cid
        self.name = name  # (rank, lane) or (rank, None)
        self.state = "ready"
        self.wait_kind = None
        self.labels: dict = {}
        self.error: BaseException | None = None
        self.resume_evt = threading.Event()
        self.parked_evt = threading.Event()
        self.thread = threading.Thread(
            target=self._run, args=(fn, args), name=str(name), daemon=True)

    def _run(self, fn, args):
        self.resume_evt.wait()
        self.resume_evt.clear()
        try:
            fn(*args)
        except BaseException as exc:
            self.error = exc
        self.state = "done"
        self.parked_evt.set()

    def describe(self) -> str:
        rank, lane = self.name if isinstance(self.name, tuple) else (self.name, None)
        where = f"rank {rank}" + (f" lane {lane}" if lane is not None else "")
        if self.labels:
            where += " at " + " ".join(f"{k}={v}" for k, v in sorted(self.labels.items()))
        what, detail = self.wait_kind if self.wait_kind else ("?", None)
        if what == "recv":
            _, src, _, tag = detail
            reason = f"recv(src={src}, tag={tag})"
        elif what == "send":
            reason = repr(detail)
        elif what == "join":
            reason = "join of " + ", ".join(str(c.name) for c in detail)
        else:
            reason = str(detail)
        return f"{where}: blocked on {reason}"


class SimScheduler:
    """Runs each (rank, lane) context one at a time; the virtual clock advances
    only when every context is parked, so runs are fully deterministic."""

    def __init__(self, links: LinkScheduler):
        self.links = links
        self.contexts: list[_SimContext] = []
        self.channels: dict[tuple, deque] = {}
        self._current: _SimContext | None = None

    # called from the main thread or from inside a running context
    def spawn(self, fn, *args, name=None) -> _SimContext:
        ctx = _SimContext(len(self.contexts), name, fn, args)
        self.contexts.append(ctx)
        ctx.thread.start()
        return ctx

    def channel(self, key: tuple) -> deque:
        ch = self.channels.get(key)
        if ch is None:
            ch = self.channels[key] = deque()
        return ch

    def _park(self, kind) -> None:
        ctx = self._current
        ctx.wait_kind = kind
        ctx.state = "blocked"
        ctx.parked_evt.set()
        ctx.resume_evt.wait()
        ctx.resume_evt.clear()

    def wait_recv(self, key) -> bytes:
        ch = self.channel(key)
        if not ch:
            self._park(("recv", key))
        return ch.popleft()

    def wait_send(self, op) -> None:
        if not op.done:
            self._park(("send", op))

    def join(self, handles) -> None:
        if any(c.state != "done" for c in handles):
            self._park(("join", tuple(handles)))
        for c in handles:
            if c.error is not None:
                raise c.error

    def _step(self, ctx: _SimContext) -> None:
        self._current = ctx
        ctx.state = "running"
        ctx.resume_evt.set()
        ctx.parked_evt.wait()
        ctx.parked_evt.clear()
        self._current = None
        if ctx.state == "done" and ctx.error is not None:
            raise ctx.error

    def _wake(self) -> None:
        for c in self.contexts:
            if c.state != "blocked":
                continue
            what, detail = c.wait_kind
            if what == "recv" and self.channels.get(detail):
                c.state = "ready"
            elif what == "send" and detail.done:
                c.state = "ready"
            elif what == "join" and all(t.state == "done" for t in detail):
                c.state = "ready"

    def _deliver_next(self) -> bool:
        out = self.links.step_until_delivery()
        if out is None:
            return False
        msg, t = out
        msg.cb(msg, t)  # appends to channel / marks send op done, flips waiters
        return True

    def run(self) -> None:
        while True:
            ready = [c for c in self.contexts if c.state == "ready"]
            if ready:
                self._step(ready[0])
                self._wake()
                continue
            if self._deliver_next():
                self._wake()
                continue
            blocked = [c for c in self.contexts if c.state == "blocked"]
            if not blocked:
                return
            detail = "; ".join(c.describe() for c in blocked)
            first = blocked[0]
            rank, lane = first.name if isinstance(first.name, tuple) else (None, None)
            raise DeadlockError(
                f"simulated experiment stalled with no events pending: {detail}",
                rank=rank, lane=lane, step=first.labels.get("step"))


class _SimSendOp(PendingOp):
    def __init__(self, sched: SimScheduler, describe: str):
        self._sched = sched
        self.done = False
        self.describe = describe

    def __repr__(self):
        return f"send{self.describe}"

    def _wait(self, timeout):
        self._sched.wait_send(self)
        return None


class _SimRecvOp(PendingOp):
    def __init__(self, sched: SimScheduler, key):
        self._sched = sched
        self._key = key

    def _wait(self, timeout):
        return self._sched.wait_recv(self._key)


class SimComm(Communicator):
    def __init__(self, sched: SimScheduler, ctx, rank, size, world_ranks):
        super().__init__(ctx, rank, size, world_ranks)
        self._sched = sched

    def isend(self, dest, tag, payload):
        self._check_peer(dest, "send dest")
        payload = bytes(payload)
        key = (self.ctx, self.rank, dest, tag)
        op = _SimSendOp(self._sched, f"(dst={dest}, tag={tag})")
        sched = self._sched

        # the callback records delivery; the scheduler's _wake() pass flips
        # any context blocked on this channel or on this send op
        def cb(msg, t, _key=key, _op=op, _data=payload):
            sched.channel(_key).append(_data)
            _op.done = True

        sched.links.submit(self.world_ranks[self.rank],
                           self.world_ranks[dest], tag,
                           len(payload), cb, sched.links.now)
        return op

    def irecv(self, source, tag):
        self._check_peer(source, "recv source")
        return _SimRecvOp(self._sched, (self.ctx, source, self.rank, tag))

    def _make_sibling(self, ctx, rank, size, world_ranks):
        return SimComm(self._sched, ctx, rank, size, world_ranks)


class SimRuntime(Runtime):
    clock_label = "virtual"

    def __init__(self, sched: SimScheduler):
        self._sched = sched

    def now(self) -> float:
        return self._sched.links.now

    def spawn(self, fn, *args, name=None):
        return self._sched.spawn(fn, *args, name=name)

    def join(self, handles):
        self._sched.join(handles)

    def annotate(self, **labels):
        ctx = self._sched._current
        if ctx is not None:
            ctx.labels.update(labels)


def make_sim_world(link: SimLinkConfig,
                   record_events: bool = False) -> tuple[SimScheduler, SimRuntime]:
    sched = SimScheduler(LinkScheduler(link, record_events))
    return sched, SimRuntime(sched)


def sim_world_comm(sched: SimScheduler, world_size: int, rank: int) -> SimComm:
    return SimComm(sched, ctx=0, rank=rank, size=world_size,
                   world_ranks=tuple(range(world_size)))


# --- traffic replay: the engine's communication skeleton, size-only payloads --

class _TrafficLane:
    __slots__ = ("rank", "lane", "send_to", "tag", "sends_done", "recvs_done",
                 "steps_done", "target", "finished_at")

    def __init__(self, rank, lane, send_to, tag, target):
        self.rank = rank
        self.lane = lane
        self.send_to = send_to
        self.tag = tag
        self.sends_done = 0
        self.recvs_done = 0
        self.steps_done = 0
        self.target = target
        self.finished_at = 0.0


@dataclass
class TrafficResult:
    elapsed: float
    messages: int
    subring_size: int
    n_meas: int
    msg_bytes: int
    events: list | None = None


def simulate_ring_traffic(subring_size: int, n_meas: int, msg_bytes: int,
                          link: SimLinkConfig, lanes: int = 1,
                          direction: str = "forward",
                          record_events: bool = False) -> TrafficResult:
    """Virtual elapsed time of the ring pattern: every lane performs n_meas
    measurements of subring_size - 1 receive/send steps.

    One sub-ring of `subring_size` ranks is simulated (sub-rings are
    independent); payload content is irrelevant to timing and omitted.
    """
    s = subring_size
    if s < 1:
        raise ConfigError("subring size must be >= 1")
    if s == 1 or n_meas == 0:
        return TrafficResult(0.0, 0, s, n_meas, msg_bytes,
                             [] if record_events else None)
    links = LinkScheduler(link, record_events)
    target = n_meas * (s - 1)
    table: dict[tuple[int, int], _TrafficLane] = {}
    for rank in range(s):
        for t in range(lanes):
            if direction == "alternate" and t % 2 == 1:
                send_to = (rank - 1) % s
            else:
                send_to = (rank + 1) % s
            table[(rank, t)] = _TrafficLane(rank, t, send_to, 1000 + t, target)

    def on_deliver(msg, t, sender=None, receiver=None):
        sender.sends_done += 1
        receiver.recvs_done += 1
        _advance(sender, t)
        if receiver is not sender:
            _advance(receiver, t)

    def _submit(ls: _TrafficLane, t: float) -> None:
        receiver = table[(ls.send_to, ls.lane)]

        def cb(msg, td, _s=ls, _r=receiver):
            on_deliver(msg, td, sender=_s, receiver=_r)

        links.submit(ls.rank, ls.send_to, ls.tag, msg_bytes, cb, t)

    def _advance(ls: _TrafficLane, t: float) -> None:
        while (ls.steps_done < ls.target
               and ls.sends_done > ls.steps_done
               and ls.recvs_done > ls.steps_done):
            ls.steps_done += 1
            if ls.steps_done < ls.target:
                _submit(ls, t)
            else:
                ls.finished_at = t

    for key in sorted(table):
        _submit(table[key], 0.0)
    links.run_all()

    unfinished = [k for k, ls in table.items() if ls.steps_done < ls.target]
    if unfinished:
        raise ContractViolation(f"traffic replay stalled for lanes {unfinished}")
    elapsed = max(ls.finished_at for ls in table.values())
    return TrafficResult(elapsed, s * lanes * target, s, n_meas, msg_bytes,
                         links.events)
