"""Functional coverage of the TCP transport (excluded from timing acceptance)."""

import socket
import struct
import threading

import numpy as np
import pytest

from ringacc.accuracy import oracle_for_config
from ringacc.engine import run_experiment
from ringacc.transport.tcp import MAGIC, VERSION, TcpTransport

from conftest import desk_config


def boot_pair():
    """Two TcpTransport endpoints inside one process (threads)."""
    port_holder = {}
    ready = threading.Event()

    def note_port(p):
        port_holder["port"] = p
        ready.set()

    out = {}

    def rank0():
        out[0] = TcpTransport.connect_world(2, 0, 0, timeout_s=10, on_port=note_port)

    th0 = threading.Thread(target=rank0, daemon=True)
    th0.start()
    assert ready.wait(10)
    out[1] = TcpTransport.connect_world(2, 1, port_holder["port"], timeout_s=10)
    th0.join(10)
    return out[0], out[1]


class TestWireLevel:
    def test_handshake_magic_and_version(self):
        # a raw client sees the magic + big-endian version before any frame
        srv = socket.create_server(("127.0.0.1", 0), backlog=1)
        port = srv.getsockname()[1]
        got = {}

        def accept():
            sock, _ = srv.accept()
            got["greeting"] = sock.recv(8)
            sock.sendall(MAGIC + struct.pack(">I", VERSION))
            sock.close()

        th = threading.Thread(target=accept, daemon=True)
        th.start()
        cli = socket.create_connection(("127.0.0.1", port), timeout=5)
        cli.sendall(MAGIC + struct.pack(">I", VERSION))
        reply = cli.recv(8)
        th.join(5)
        assert got["greeting"][:4] == MAGIC
        assert struct.unpack(">I", got["greeting"][4:])[0] == VERSION
        assert reply[:4] == MAGIC
        cli.close()
        srv.close()

    def test_point_to_point_round_trip(self):
        t0, t1 = boot_pair()
        try:
            c0, c1 = t0.comm(), t1.comm()
            payload = bytes(range(200)) * 3
            c0.isend(1, 42, payload).wait()
            assert c1.irecv(0, 42).wait() == payload
            # FIFO on one channel
            c1.isend(0, 7, b"a").wait()
            c1.isend(0, 7, b"b").wait()
            assert c0.irecv(1, 7).wait() == b"a"
            assert c0.irecv(1, 7).wait() == b"b"
        finally:
            t0.close()
            t1.close()

    def test_loopback(self):
        t0, t1 = boot_pair()
        try:
            c0 = t0.comm()
            c0.isend(0, 1, b"self").wait()
            assert c0.irecv(0, 1).wait() == b"self"
        finally:
            t0.close()
            t1.close()

    def test_collectives_over_sockets(self):
        t0, t1 = boot_pair()
        try:
            results = {}

            def reduce_side(comm, rank):
                results[rank] = comm.reduce_sum(np.full((2, 2), rank + 1.0), root=0)

            th = threading.Thread(target=reduce_side, args=(t1.comm(), 1), daemon=True)
            th.start()
            reduce_side(t0.comm(), 0)
            th.join(10)
            assert np.array_equal(results[0], np.full((2, 2), 3.0))
            assert results[1] is None
        finally:
            t0.close()
            t1.close()


@pytest.mark.slow
class TestTcpEngine:
    def test_engine_matches_oracle(self):
        cfg = desk_config(world_size=2, subring_size=2, lanes=2,
                          measurements=2, transport="tcp")
        rep = run_experiment(cfg)
        assert np.array_equal(rep.tensor, oracle_for_config(cfg).data)
        c = rep.registry().snapshot("global")
        assert c.envelopes_sent == c.envelopes_received == 2 * 2 * 2 * 1

    def test_two_subrings_across_processes(self):
        cfg = desk_config(n_k=2, n_w=2, world_size=4, subring_size=2, lanes=1,
                          measurements=2, transport="tcp")
        rep = run_experiment(cfg)
        assert np.array_equal(rep.tensor, oracle_for_config(cfg).data)
