#!/usr/bin/env python3
"""Accuracy verification: distributed engine vs serial oracle over several
seeds, reported as mean +/- sample stddev per metric with the 5e-7 gate.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from ringacc.accuracy import THRESHOLD, verify
from ringacc.config import ExperimentConfig


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n-k", type=int, default=2)
    parser.add_argument("--n-w", type=int, default=3)
    parser.add_argument("--world", type=int, default=6)
    parser.add_argument("--subring", type=int, default=3)
    parser.add_argument("--lanes", type=int, default=7)
    parser.add_argument("--measurements", type=int, default=100)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--runs", type=int, default=5)
    parser.add_argument("--mode", choices=("float", "integer"), default="float")
    args = parser.parse_args()

    cfg = ExperimentConfig(
        n_k=args.n_k, n_w=args.n_w, world_size=args.world,
        subring_size=args.subring, lanes=args.lanes,
        measurements=args.measurements, seed=args.seed, value_mode=args.mode)
    result = verify(cfg, runs=args.runs)

    print(f"{'metric':>8} {'mean':>12} {'stddev':>12} {'< 5e-7':>7}")
    for metric in ("l1_real", "l1_imag", "l2_real", "l2_imag"):
        mean, std = result.mean(metric), result.std(metric)
        print(f"{metric:>8} {mean:>12.3e} {std:>12.3e} "
              f"{str(mean < THRESHOLD):>7}")
    print(f"\noverall pass over {args.runs} runs: {result.passed}")
    return 0 if result.passed else 3


if __name__ == "__main__":
    sys.exit(main())
