import numpy as np
from dataclasses import replace

from ringacc.engine import run_experiment
from ringacc.instrument import CounterRegistry, CounterSet, LaneRecorder, NullRecorder
from ringacc.wire import gsigma_wire_bytes
from ringacc.tensor import CombinedIndexSpace

from conftest import desk_config


class TestCounterSet:
    def test_fresh_counters_are_zero(self):
        c = CounterSet()
        assert c.envelopes_sent == c.envelopes_received == 0
        assert c.bytes_sent == c.bytes_received == 0
        assert c.accumulations_applied == 0
        assert c.wait_s == c.accumulate_s == c.total_s == 0.0

    def test_registry_scopes(self):
        reg = CounterRegistry()
        a, b = CounterSet(envelopes_sent=2), CounterSet(envelopes_sent=3)
        reg.register(0, 0, a)
        reg.register(0, 1, b)
        reg.register(1, 0, CounterSet(envelopes_sent=7))
        assert reg.snapshot("lane", rank=0, lane=1).envelopes_sent == 3
        assert reg.snapshot("rank", rank=0).envelopes_sent == 5
        assert reg.snapshot("global").envelopes_sent == 12

    def test_round_trip_dict(self):
        c = CounterSet(envelopes_sent=1, bytes_sent=42, wait_s=0.5)
        assert CounterSet.from_dict(c.to_dict()) == c

    def test_recorder_updates(self):
        c = CounterSet()
        rec = LaneRecorder(c, lambda: 0.0)
        rec.sent(10)
        rec.received(20)
        rec.accumulated(0.25)
        rec.waited(0.5)
        assert (c.envelopes_sent, c.bytes_sent) == (1, 10)
        assert (c.envelopes_received, c.bytes_received) == (1, 20)
        assert c.accumulations_applied == 1 and c.accumulate_s == 0.25
        assert c.wait_s == 0.5

    def test_null_recorder_is_inert(self):
        rec = NullRecorder()
        rec.sent(10)
        rec.received(10)
        rec.accumulated(1.0)
        rec.waited(1.0)
        rec.finish(0.0)
        assert not rec.enabled


class TestEngineCounters:
    def test_sends_match_formula(self):
        # S=3, k=1, M=2: each rank sends (S-1)*M = 4 envelopes
        cfg = desk_config(n_k=2, n_w=2, world_size=3, subring_size=3,
                          lanes=1, measurements=2)
        rep = run_experiment(cfg)
        for r in range(3):
            c = rep.registry().snapshot("rank", rank=r)
            assert c.envelopes_sent == 4
            assert c.envelopes_received == 4

    def test_bytes_per_envelope(self):
        cfg = desk_config(n_k=2, n_w=2, world_size=2, subring_size=2,
                          lanes=1, measurements=3)
        rep = run_experiment(cfg)
        wire = gsigma_wire_bytes(CombinedIndexSpace(2, 2))
        c = rep.registry().snapshot("rank", rank=0)
        assert c.bytes_sent == c.envelopes_sent * wire
        assert c.bytes_received == c.envelopes_received * wire

    def test_subring_conservation(self):
        cfg = desk_config(n_k=2, n_w=3, world_size=6, subring_size=3,
                          lanes=2, measurements=2)
        rep = run_experiment(cfg)
        for subring in (0, 1):
            sent = recv = 0
            for r in range(subring * 3, subring * 3 + 3):
                c = rep.registry().snapshot("rank", rank=r)
                sent += c.envelopes_sent
                recv += c.envelopes_received
            assert sent == recv

    def test_accumulations_per_rank(self):
        cfg = desk_config(world_size=4, subring_size=2, lanes=3, measurements=2)
        rep = run_experiment(cfg)
        for r in range(4):
            c = rep.registry().snapshot("rank", rank=r)
            assert c.accumulations_applied == 2 * 2 * 3  # S*M*k

    def test_timer_nesting(self):
        cfg = desk_config(n_k=2, n_w=3, world_size=6, subring_size=3,
                          lanes=2, measurements=3, value_mode="float")
        rep = run_experiment(cfg)
        for (r, t), c in rep.lane_counters.items():
            assert c.wait_s >= 0 and c.accumulate_s >= 0
            assert c.wait_s + c.accumulate_s <= c.total_s + 1e-9

    def test_disabled_instrumentation_same_bits(self):
        cfg = desk_config(n_k=2, n_w=2, world_size=4, subring_size=2,
                          lanes=2, measurements=2)
        on = run_experiment(cfg)
        off = run_experiment(replace(cfg, instrument=False))
        assert np.array_equal(on.tensor, off.tensor)
        assert off.lane_counters == {}
        assert off.memory_peaks == {r: 0 for r in range(4)}
