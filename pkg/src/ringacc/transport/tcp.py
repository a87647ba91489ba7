"""TCP multi-process transport: one OS process per rank, rank 0 as the
rendezvous listener.

Wire format per connection: 4-byte magic, 4-byte big-endian version, then
length-prefixed envelope frames (8-byte big-endian length; little-endian
header: context u64, source u32, dest u32, tag i64; then the payload bytes).

Functionally complete but excluded from timing acceptance: wall-clock timing
on shared hosts is not reproducible.
"""

from __future__ import annotations

import queue
import socket
import struct
import subprocess
import sys
import threading
import time
from pathlib import Path

from ..errors import DeadlockError, TransportError
from .base import Communicator, PendingOp
from .inprocess import InProcessRuntime

MAGIC = b"RGAC"
VERSION = 1

_FRAME_LEN = struct.Struct(">Q")
_ENVELOPE = struct.Struct("<QIIq")  # ctx, src, dst, tag
_HELLO = struct.Struct("<II")       # rank, listen_port


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise TransportError("peer closed connection mid-frame")
        buf.extend(chunk)
    return bytes(buf)


def _handshake(sock: socket.socket) -> None:
    sock.sendall(MAGIC + struct.pack(">I", VERSION))
    got = _recv_exact(sock, 8)
    if got[:4] != MAGIC:
        raise TransportError(f"bad magic from peer: {got[:4]!r}")
    (version,) = struct.unpack(">I", got[4:])
    if version != VERSION:
        raise TransportError(f"wire version mismatch: {version} != {VERSION}")


def _send_frame(sock: socket.socket, lock: threading.Lock, body: bytes) -> None:
    with lock:
        sock.sendall(_FRAME_LEN.pack(len(body)) + body)


def _recv_frame(sock: socket.socket) -> bytes:
    (n,) = _FRAME_LEN.unpack(_recv_exact(sock, 8))
    return _recv_exact(sock, n)


class TcpTransport:
    """Per-process endpoint holding the full mesh of rank connections."""

    def __init__(self, world_size: int, rank: int, timeout_s: float = 30.0):
        self.world_size = world_size
        self.rank = rank
        self.timeout_s = timeout_s
        self._conns: dict[int, socket.socket] = {}
        self._write_locks: dict[int, threading.Lock] = {}
        self._channels: dict[tuple, queue.Queue] = {}
        self._chan_lock = threading.Lock()
        self._readers: list[threading.Thread] = []
        self._closed = False

    # -- bootstrap --------------------------------------------------------

    @classmethod
    def connect_world(cls, world_size: int, rank: int, port: int,
                      host: str = "127.0.0.1", timeout_s: float = 30.0,
                      on_port=None) -> "TcpTransport":
        """Establish the full mesh.  Rank 0 listens on `port` (0 picks an
        ephemeral port, reported through on_port); other ranks register with
        rank 0, learn everyone's listener, then connect pairwise."""
        t = cls(world_size, rank, timeout_s)
        if world_size == 1:
            return t
        listener = socket.create_server((host, 0), backlog=world_size)
        my_port = listener.getsockname()[1]

        if rank == 0:
            rdv = socket.create_server((host, port), backlog=world_size)
            if on_port is not None:
                on_port(rdv.getsockname()[1])
            ports = {0: my_port}
            for _ in range(world_size - 1):
                sock, _ = rdv.accept()
                _handshake(sock)
                peer, peer_port = _HELLO.unpack(_recv_exact(sock, _HELLO.size))
                ports[peer] = peer_port
                t._register(peer, sock)
            rdv.close()
            blob = struct.pack(f"<{world_size}I",
                               *(ports[r] for r in range(world_size)))
            for peer in range(1, world_size):
                _send_frame(t._conns[peer], t._write_locks[peer], blob)
        else:
            sock = _connect_retry(host, port, timeout_s)
            _handshake(sock)
            sock.sendall(_HELLO.pack(rank, my_port))
            blob = _recv_frame(sock)
            ports = dict(enumerate(struct.unpack(f"<{world_size}I", blob)))
            t._register(0, sock)
            for peer in range(1, rank):
                s = _connect_retry(host, ports[peer], timeout_s)
                _handshake(s)
                s.sendall(_HELLO.pack(rank, 0))
                t._register(peer, s)

        expected_inbound = world_size - 1 - max(rank, 0) if rank > 0 else 0
        for _ in range(expected_inbound):
            sock, _ = listener.accept()
            _handshake(sock)
            peer, _ = _HELLO.unpack(_recv_exact(sock, _HELLO.size))
            t._register(peer, sock)
        listener.close()
        t._start_readers()
        return t

    def _register(self, peer: int, sock: socket.socket) -> None:
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._conns[peer] = sock
        self._write_locks[peer] = threading.Lock()

    def _start_readers(self) -> None:
        for peer, sock in self._conns.items():
            th = threading.Thread(target=self._read_loop, args=(sock,),
                                  name=f"tcp-read-{self.rank}<-{peer}", daemon=True)
            th.start()
            self._readers.append(th)

    def _read_loop(self, sock: socket.socket) -> None:
        try:
            while True:
                frame = _recv_frame(sock)
                ctx, src, dst, tag = _ENVELOPE.unpack_from(frame)
                payload = frame[_ENVELOPE.size:]
                self.channel((ctx, src, dst, tag)).put(payload)
        except (TransportError, OSError):
            return  # peer shut down

    # -- channels ----------------------------------------------------------

    def channel(self, key: tuple) -> queue.Queue:
        with self._chan_lock:
            ch = self._channels.get(key)
            if ch is None:
                ch = self._channels[key] = queue.Queue()
            return ch

    def send_envelope(self, world_dst: int, ctx: int, src: int, dst: int,
                      tag: int, payload: bytes) -> None:
        if world_dst == self.rank:  # loopback
            self.channel((ctx, src, dst, tag)).put(payload)
            return
        body = _ENVELOPE.pack(ctx, src, dst, tag) + payload
        _send_frame(self._conns[world_dst], self._write_locks[world_dst], body)

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        for sock in self._conns.values():
            try:
                sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            sock.close()

    def comm(self) -> "TcpComm":
        return TcpComm(self, ctx=0, rank=self.rank, size=self.world_size,
                       world_ranks=tuple(range(self.world_size)))


def _connect_retry(host: str, port: int, timeout_s: float) -> socket.socket:
    deadline = time.monotonic() + timeout_s
    while True:
        try:
            return socket.create_connection((host, port), timeout=timeout_s)
        except OSError:
            if time.monotonic() >= deadline:
                raise TransportError(
                    f"could not reach {host}:{port} within {timeout_s}s") from None
            time.sleep(0.05)


class _TcpSendOp(PendingOp):
    def _wait(self, timeout):
        return None


class _TcpRecvOp(PendingOp):
    def __init__(self, channel: queue.Queue, default_timeout, source, tag):
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


class TcpComm(Communicator):
    def __init__(self, transport: TcpTransport, ctx, rank, size, world_ranks):
        super().__init__(ctx, rank, size, world_ranks)
        self._transport = transport

    def isend(self, dest, tag, payload):
        self._check_peer(dest, "send dest")
        self._transport.send_envelope(self.world_ranks[dest], self.ctx,
                                      self.rank, dest, tag, bytes(payload))
        return _TcpSendOp()

    def irecv(self, source, tag):
        self._check_peer(source, "recv source")
        ch = self._transport.channel((self.ctx, source, self.rank, tag))
        return _TcpRecvOp(ch, self._transport.timeout_s, source, tag)

    def _make_sibling(self, ctx, rank, size, world_ranks):
        return TcpComm(self._transport, ctx, rank, size, world_ranks)


class TcpRuntime(InProcessRuntime):
    """Lanes inside one rank process are plain threads."""


# --- launcher -----------------------------------------------------------------

def run_tcp_experiment(cfg, workdir: str | Path | None = None):
    """Spawn one worker process per rank; rank 0 serializes the report."""
    import json
    import tempfile

    from ..engine import ExperimentReport

    own_dir = None
    if workdir is None:
        own_dir = tempfile.TemporaryDirectory(prefix="ringacc-tcp-")
        workdir = own_dir.name
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    cfg_path = workdir / "config.json"
    cfg_path.write_text(json.dumps(cfg.to_dict(), indent=1))

    budget = max(60.0, cfg.timeout_s * 4)
    procs = []
    try:
        rank0 = subprocess.Popen(
            [sys.executable, "-m", "ringacc.tcp_worker", "--rank", "0",
             "--world", str(cfg.world_size), "--port", "0",
             "--config", str(cfg_path), "--out", str(workdir)],
            stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True)
        procs.append(rank0)
        line = rank0.stdout.readline().strip()
        if not line.startswith("PORT "):
            _reap(procs, budget)
            raise TransportError(f"rank 0 worker failed to report its port: {line!r}")
        port = int(line.split()[1])
        for r in range(1, cfg.world_size):
            procs.append(subprocess.Popen(
                [sys.executable, "-m", "ringacc.tcp_worker", "--rank", str(r),
                 "--world", str(cfg.world_size), "--port", str(port),
                 "--config", str(cfg_path), "--out", str(workdir)],
                stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True))
        codes = _reap(procs, budget)
        if any(c == 4 for c in codes):
            detail = "; ".join(p.stderr.read().strip()[-300:]
                               for c, p in zip(codes, procs) if c == 4)
            raise DeadlockError(f"a TCP worker reported a deadlock: {detail}")
        if any(c != 0 for c in codes):
            details = "; ".join(
                f"rank {i}: exit {c}, stderr tail: {p.stderr.read()[-400:]!r}"
                for i, (c, p) in enumerate(zip(codes, procs)) if c != 0)
            raise TransportError(f"TCP worker failure: {details}")
        import numpy as np
        report_dict = json.loads((workdir / "report.json").read_text())
        tensor = np.load(workdir / "tensor.npy")
        return ExperimentReport.from_json_dict(report_dict, tensor)
    finally:
        for p in procs:
            if p.poll() is None:
                p.kill()
        if own_dir is not None:
            own_dir.cleanup()


def _reap(procs, budget: float) -> list[int]:
    deadline = time.monotonic() + budget
    codes = []
    for p in procs:
        remaining = max(0.5, deadline - time.monotonic())
        try:
            codes.append(p.wait(timeout=remaining))
        except subprocess.TimeoutExpired:
            p.kill()
            codes.append(-9)
    return codes
