#!/usr/bin/env python3
"""Sub-ring size scaling sweep on the simulated transport.

Reproduces the production-scale communication shape at desk scale: six ranks
per node, 1.7 MB messages, 1400 measurements per rank, sub-ring sizes up to
60.  Prints the elapsed-time table, effective bandwidths, the least-squares
fit, and the analytic prediction deltas.
"""

import argparse
import csv
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from ringacc.perf import (SweepPoint, effective_bandwidth, fit_linear,
                          model_utilization, predict_elapsed)
from ringacc.transport.sim import SimLinkConfig, simulate_ring_traffic


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--subrings", default="6,12,24,36,60")
    parser.add_argument("--msg-bytes", type=int, default=1_700_000)
    parser.add_argument("--measurements", type=int, default=1400)
    parser.add_argument("--nic", type=float, default=12.5e9)
    parser.add_argument("--intra", type=float, default=25e9)
    parser.add_argument("--latency", type=float, default=5e-6)
    parser.add_argument("--ranks-per-node", type=int, default=6)
    parser.add_argument("--out", default=None, help="optional sweep.csv path")
    args = parser.parse_args()

    link = SimLinkConfig(nic_bandwidth=args.nic, intra_bandwidth=args.intra,
                         latency=args.latency, ranks_per_node=args.ranks_per_node)
    subrings = [int(s) for s in args.subrings.split(",")]

    points, rows = [], []
    print(f"{'S':>4} {'elapsed_s':>11} {'eff_bw GB/s':>12} {'predicted_s':>12} {'delta':>7}")
    for s in subrings:
        r = simulate_ring_traffic(s, args.measurements, args.msg_bytes, link)
        pred = predict_elapsed(s, args.measurements, args.msg_bytes, link)
        bw = effective_bandwidth(args.msg_bytes, s, args.measurements, r.elapsed)
        delta = abs(r.elapsed - pred) / pred if pred else 0.0
        print(f"{s:>4} {r.elapsed:>11.4f} {bw / 1e9:>12.3f} {pred:>12.4f} {delta:>6.2%}")
        points.append(SweepPoint(s, r.elapsed, args.msg_bytes,
                                 args.measurements, args.ranks_per_node))
        rows.append([s, args.measurements, args.msg_bytes, repr(r.elapsed),
                     repr(bw), repr(pred)])

    fit = fit_linear(points)
    print(f"\nleast-squares: elapsed = {fit.slope:.5f}*S + {fit.intercept:.5f}"
          f"  (r^2 = {fit.r_squared:.5f})")
    s_max = max(subrings)
    u = model_utilization(s_max, link)
    print(f"utilization factor at S={s_max}: {u:.2f} "
          f"(one stream gets {u:.0%} of the {link.nic_bandwidth / 1e9:.1f} GB/s port)")

    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["S", "n_meas", "msg_bytes", "elapsed_s", "eff_bw_Bps",
                        "predicted_s"])
            w.writerows(rows)
        print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
