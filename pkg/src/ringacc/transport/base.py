"""Message-passing abstraction: nonblocking send/receive with tagged matching,
communicator split, and sum-reduction.

Collectives are implemented once, on top of the point-to-point primitives,
inside a reserved tag range, so every transport shares identical semantics:
split groups by color and ranks by (key, parent rank); reduce sums
contributions in canonical rank order at the root.
"""

from __future__ import annotations

import struct
from abc import ABC, abstractmethod

import numpy as np

from ..errors import ContractViolation
from ..wire import deserialize_array, serialize_array

SYS_TAG_BASE = 1 << 40  # user tags must stay below this

_MASK64 = 0xFFFFFFFFFFFFFFFF


def _mix(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_context(parent_ctx: int, seq: int, color: int) -> int:
    """Deterministic child communicator id; identical on every member rank."""
    return _mix(_mix(parent_ctx ^ _mix(seq)) ^ _mix(color & _MASK64))


class PendingOp(ABC):
    """Handle for one in-flight send or receive; wait() returns exactly once."""

    _waited = False

    def wait(self, timeout: float | None = None):
        if self._waited:
            raise ContractViolation("wait() called twice on the same operation")
        self._waited = True
        return self._wait(timeout)

    @abstractmethod
    def _wait(self, timeout):
        ...


class Communicator(ABC):
    """A group of ranks with point-to-point messaging and collectives.

    ``world_ranks[i]`` maps communicator rank i to the flat world rank, which
    transports use for routing and link classification.
    """

    def __init__(self, ctx: int, rank: int, size: int, world_ranks: tuple[int, ...]):
        self.ctx = ctx
        self.rank = rank
        self.size = size
        self.world_ranks = world_ranks
        self._collective_seq = 0

    # -- point to point --------------------------------------------------

    @abstractmethod
    def isend(self, dest: int, tag: int, payload: bytes) -> PendingOp:
        ...

    @abstractmethod
    def irecv(self, source: int, tag: int) -> PendingOp:
        ...

    @abstractmethod
    def _make_sibling(self, ctx: int, rank: int, size: int,
                      world_ranks: tuple[int, ...]) -> "Communicator":
        ...

    def _check_peer(self, peer: int, what: str) -> None:
        if not (0 <= peer < self.size):
            raise ContractViolation(f"{what} rank {peer} outside [0, {self.size})")

    # -- collectives ------------------------------------------------------

    def _sys_tag(self) -> int:
        self._collective_seq += 1
        return SYS_TAG_BASE + self._collective_seq

    def split(self, color: int, key: int) -> "Communicator":
        """Partition into sub-communicators of equal color, ranked by key
        (ties broken by parent rank).  Collective over all ranks."""
        tag = self._sys_tag()
        seq = self._collective_seq
        if self.rank == 0:
            entries = [(color, key, 0)]
            for r in range(1, self.size):
                c, k = struct.unpack("<qq", self.irecv(r, tag).wait())
                entries.append((c, k, r))
            groups: dict[int, list[tuple[int, int]]] = {}
            for c, k, r in entries:
                groups.setdefault(c, []).append((k, r))
            replies = {}
            for c, members in groups.items():
                members.sort()  # by (key, parent rank)
                parent_ranks = [r for _, r in members]
                ctx = derive_context(self.ctx, seq, c)
                for new_rank, pr in enumerate(parent_ranks):
                    replies[pr] = (ctx, new_rank, parent_ranks)
            for r in range(1, self.size):
                ctx, new_rank, parent_ranks = replies[r]
                blob = struct.pack("<QqQ", ctx, new_rank, len(parent_ranks))
                blob += struct.pack(f"<{len(parent_ranks)}q", *parent_ranks)
                self.isend(r, tag, blob).wait()
            ctx, new_rank, parent_ranks = replies[0]
        else:
            self.isend(0, tag, struct.pack("<qq", color, key)).wait()
            blob = self.irecv(0, tag).wait()
            ctx, new_rank, n = struct.unpack_from("<QqQ", blob)
            parent_ranks = list(struct.unpack_from(f"<{n}q", blob, 24))
        member_world = tuple(self.world_ranks[pr] for pr in parent_ranks)
        return self._make_sibling(ctx, new_rank, len(parent_ranks), member_world)

    def reduce_sum(self, local: np.ndarray, root: int = 0) -> np.ndarray | None:
        """Entrywise sum at root, accumulated in canonical rank order 0,1,2,...
        Non-roots return None.  Collective over all ranks."""
        self._check_peer(root, "reduce root")
        tag = self._sys_tag()
        contribution = np.asarray(local, dtype=np.complex128)
        if self.rank != root:
            self.isend(root, tag, serialize_array(contribution)).wait()
            return None
        total = None
        for r in range(self.size):
            if r == self.rank:
                arr = contribution
            else:
                arr = deserialize_array(self.irecv(r, tag).wait())
            if total is None:
                total = arr.copy()
            else:
                if arr.shape != total.shape:
                    raise ContractViolation(
                        f"reduce_sum shape mismatch: rank {r} contributed "
                        f"{arr.shape}, expected {total.shape}")
                total += arr
        return total


class Runtime(ABC):
    """Execution contexts and the experiment clock for one transport."""

    clock_label = "monotonic"

    @abstractmethod
    def spawn(self, fn, *args, name=None):
        ...

    @abstractmethod
    def join(self, handles):
        ...

    @abstractmethod
    def now(self) -> float:
        ...

    def make_lock(self):
        import threading
        return threading.Lock()

    def annotate(self, **labels) -> None:
        """Attach diagnostic labels (rank/lane/step) to the current context."""
