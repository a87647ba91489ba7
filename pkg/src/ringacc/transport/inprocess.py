"""In-process concurrent transport: one thread per execution context, a shared
hub of FIFO channels keyed by (context, source, dest, tag).

Sends are buffered (payload copied into the channel, completing immediately);
receives block with a harness timeout that surfaces deadlocks.
"""

from __future__ import annotations

import queue
import threading
import time

from ..errors import ContractViolation, DeadlockError
from .base import Communicator, PendingOp, Runtime


class InProcessHub:
    """Shared channel table for all ranks of one experiment."""

    def __init__(self, world_size: int, timeout_s: float = 30.0):
        if world_size < 1:
            raise ContractViolation("world size must be >= 1")
        self.world_size = world_size
        self.timeout_s = timeout_s
        self._channels: dict[tuple, queue.Queue] = {}
        self._lock = threading.Lock()

    def channel(self, key: tuple) -> queue.Queue:
        with self._lock:
            ch = self._channels.get(key)
            if ch is None:
                ch = self._channels[key] = queue.Queue()
            return ch

    def comm(self, rank: int) -> "InProcessComm":
        ranks = tuple(range(self.world_size))
        return InProcessComm(self, ctx=0, rank=rank, size=self.world_size,
                             world_ranks=ranks)


class _CompletedSend(PendingOp):
    def _wait(self, timeout):
        return None


class _QueueRecv(PendingOp):
    def __init__(self, channel: queue.Queue, default_timeout: float, source, tag):
        self._channel = channel
        self._timeout = default_timeout
        self._source = source
        self._tag = tag

    def _wait(self, timeout):
        try:
            return self._channel.get(timeout=timeout or self._timeout)
        except queue.Empty:
            raise DeadlockError(
                f"receive from rank {self._source} tag {self._tag} timed out "
                f"after {timeout or self._timeout}s") from None


class InProcessComm(Communicator):
    def __init__(self, hub: InProcessHub, ctx, rank, size, world_ranks):
        super().__init__(ctx, rank, size, world_ranks)
        self._hub = hub

    def isend(self, dest, tag, payload):
        self._check_peer(dest, "send dest")
        self._hub.channel((self.ctx, self.rank, dest, tag)).put(bytes(payload))
        return _CompletedSend()

    def irecv(self, source, tag):
        self._check_peer(source, "recv source")
        ch = self._hub.channel((self.ctx, source, self.rank, tag))
        return _QueueRecv(ch, self._hub.timeout_s, source, tag)

    def _make_sibling(self, ctx, rank, size, world_ranks):
        return InProcessComm(self._hub, ctx, rank, size, world_ranks)


class _ThreadHandle:
    def __init__(self, thread, name):
        self.thread = thread
        self.name = name
        self.error = None


class InProcessRuntime(Runtime):
    clock_label = "monotonic"

    def __init__(self):
        self._t0 = time.perf_counter()

    def now(self) -> float:
        return time.perf_counter() - self._t0

    def spawn(self, fn, *args, name=None):
        handle = _ThreadHandle(None, name)

        def runner():
            try:
                fn(*args)
            except BaseException as exc:  # surfaced at join
                handle.error = exc

        handle.thread = threading.Thread(target=runner, name=str(name), daemon=True)
        handle.thread.start()
        return handle

    def join(self, handles):
        for h in handles:
            h.thread.join()
        errors = [h.error for h in handles if h.error is not None]
        if not errors:
            return
        # a deadlock naming the stalled (rank, lane, step) beats the secondary
        # timeouts it causes elsewhere
        for e in errors:
            if isinstance(e, DeadlockError) and e.step is not None:
                raise e
        raise errors[0]
