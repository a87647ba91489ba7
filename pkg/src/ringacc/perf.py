"""Analytic performance model and empirical sweep fitting.

Per measurement each rank of a sub-ring sends S-1 and receives S-1 messages,
so total traffic grows as O(S^2) while per-link traffic grows as O(S); the
elapsed time is governed by the slowest link's per-step service time.  The
analytic model charges one slowest-link step per ring step:

    elapsed = n_meas * (S - 1) * (latency + msg_bytes * load_slow / B_slow)

Under block placement a boundary NIC carries one egress and one ingress per
lane per step (load 2k); a dedicated intra-node pair link carries the k lane
messages of its pair (load k).  No pipelining across steps is modeled.

The load-2 step time is exact when crossing messages can pair up around the
ring, i.e. for even node counts; an odd node count leaves one NIC pair
serializing a third transfer per step, which the closed form deliberately
ignores (the simulator shows the effect, largest at 3 nodes and fading as
the ring grows).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractViolation, FitError
from .transport.sim import SimLinkConfig, TrafficResult, simulate_ring_traffic


@dataclass(frozen=True)
class SweepPoint:
    subring_size: int
    elapsed_s: float
    msg_bytes: int
    n_meas: int
    ranks_per_node: int

    def __post_init__(self):
        if min(self.subring_size, self.msg_bytes, self.n_meas,
               self.ranks_per_node) <= 0 or self.elapsed_s <= 0:
            raise ContractViolation("sweep point fields must be positive")


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    r_squared: float


def message_counts(subring_size: int) -> tuple[int, int, int, int]:
    """(per_rank_send, per_rank_recv, total, per_link) for one measurement of
    one lane."""
    if subring_size < 1:
        raise ContractViolation("subring size must be >= 1")
    s = subring_size
    return (s - 1, s - 1, s * (s - 1), s - 1)


def effective_bandwidth(msg_bytes: float, subring_size: int, n_meas: int,
                        elapsed_s: float) -> float:
    """Delivered bytes per second of the ring pattern: msg * S * n_meas / T."""
    if elapsed_s <= 0:
        raise ContractViolation("elapsed time must be positive")
    return msg_bytes * subring_size * n_meas / elapsed_s


def fit_linear(points: list[SweepPoint]) -> LinearFit:
    """Ordinary least squares of elapsed time on sub-ring size."""
    if len(points) < 2:
        raise FitError("need at least two sweep points")
    xs = np.array([p.subring_size for p in points], dtype=float)
    ys = np.array([p.elapsed_s for p in points], dtype=float)
    if np.all(xs == xs[0]):
        raise FitError("all sweep points share one sub-ring size")
    sxx = float(((xs - xs.mean()) ** 2).sum())
    sxy = float(((xs - xs.mean()) * (ys - ys.mean())).sum())
    slope = sxy / sxx
    intercept = float(ys.mean() - slope * xs.mean())
    resid = ys - (slope * xs + intercept)
    sst = float(((ys - ys.mean()) ** 2).sum())
    r2 = 1.0 if sst == 0 else 1.0 - float((resid ** 2).sum()) / sst
    return LinearFit(slope, intercept, r2)


def slow_link(subring_size: int, link: SimLinkConfig,
              lanes: int = 1) -> tuple[str, int, float]:
    """(link class, per-step message load, bandwidth) of the busiest link
    under block rank placement; step time = latency + msg_bytes*load/bandwidth.
    """
    candidates = []
    if link.ranks_per_node >= 2 and subring_size >= 2:
        # dedicated pair link carries the k lane messages of its pair
        candidates.append(("intra", lanes, link.intra_bandwidth))
    if subring_size > link.ranks_per_node:
        # a boundary NIC serves egress and ingress of each lane's ring per step
        candidates.append(("nic", 2 * lanes, link.nic_bandwidth))
    if not candidates:
        return ("intra", lanes, link.intra_bandwidth)
    return max(candidates, key=lambda c: c[1] / c[2])


def predict_elapsed(subring_size: int, n_meas: int, msg_bytes: float,
                    link: SimLinkConfig, lanes: int = 1) -> float:
    """Closed-form elapsed time of the ring pattern on the slowest link."""
    if subring_size < 1:
        raise ConfigError("subring size must be >= 1")
    if subring_size == 1:
        return 0.0
    _, load, bandwidth = slow_link(subring_size, link, lanes)
    step = link.latency + msg_bytes * load / bandwidth
    return n_meas * (subring_size - 1) * step


def model_utilization(subring_size: int, link: SimLinkConfig, lanes: int = 1) -> float:
    """Fraction of the slow link's peak bandwidth available to one lane stream
    per step (1/load); 0.5 for a single-lane NIC-bound ring."""
    _, load, _ = slow_link(subring_size, link, lanes)
    return 1.0 / load


def run_sweep(subrings: list[int], msg_bytes: int, n_meas: int,
              link: SimLinkConfig, lanes: int = 1,
              direction: str = "forward") -> list[tuple[SweepPoint, float, float]]:
    """Simulate each sub-ring size; returns (point, effective_bw, predicted_s)
    rows in input order."""
    rows = []
    for s in subrings:
        result: TrafficResult = simulate_ring_traffic(
            s, n_meas, msg_bytes, link, lanes=lanes, direction=direction)
        point = SweepPoint(s, result.elapsed, msg_bytes, n_meas, link.ranks_per_node)
        bw = effective_bandwidth(msg_bytes, s, n_meas, result.elapsed)
        rows.append((point, bw, predict_elapsed(s, n_meas, msg_bytes, link, lanes)))
    return rows
