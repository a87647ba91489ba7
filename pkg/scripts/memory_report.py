#!/usr/bin/env python3
"""Memory accounting: production-shape plan plus the sharing/lane trade-off.

Shows how the per-rank footprint moves between the single-copy layout (full
tensor + 1 payload buffer per lane) and the distributed layout (1/p slice +
3 payload buffers per lane) as the lane count grows.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from ringacc.memory import gt_growth_ratio, make_plan

GB = 1e9


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--entries", type=int, default=212_336_640)
    parser.add_argument("--entry-bytes", type=int, default=16)
    parser.add_argument("--matrix-gb", type=float, default=0.17)
    parser.add_argument("--subring", type=int, default=3)
    parser.add_argument("--max-lanes", type=int, default=8)
    args = parser.parse_args()

    matrix = args.matrix_gb * GB
    print(f"tensor: {args.entries} entries x {args.entry_bytes} B = "
          f"{args.entries * args.entry_bytes / GB:.3f} GB, split over p={args.subring}")
    print(f"{'k':>3} {'original/rank GB':>17} {'distributed/rank GB':>20} {'winner':>12}")
    for k in range(1, args.max_lanes + 1):
        plan = make_plan(args.entries, args.entry_bytes, matrix,
                         p=args.subring, k=k)
        winner = ("distributed"
                  if plan.distributed_total_per_rank < plan.original_total_per_rank
                  else "original")
        print(f"{k:>3} {plan.original_total_per_rank / GB:>17.3f} "
              f"{plan.distributed_total_per_rank / GB:>20.3f} {winner:>12}")
    plan = make_plan(args.entries, args.entry_bytes, matrix, p=args.subring, k=1)
    print(f"\nbreak-even lane count: {plan.break_even_k:.2f}")
    print(f"alternate 2-buffers-per-lane convention at k=7: "
          f"{make_plan(args.entries, args.entry_bytes, matrix, p=args.subring, k=7).gsigma_bytes_alternate / GB:.3f} GB")
    print(f"\nstorage growth, 4 sites/16 freqs -> 6 sites/64 freqs: "
          f"{gt_growth_ratio(4, 16, 6, 64):.0f}x")


if __name__ == "__main__":
    main()
