"""Per-rank worker process for the TCP transport.

Invoked as `python -m ringacc.tcp_worker --rank R --world W --port P
--config FILE --out DIR`.  Rank 0 with --port 0 binds an ephemeral rendezvous
port and prints `PORT <n>` on stdout for the launcher.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import load_config
from .engine import rank_main
from .errors import ConfigError, DeadlockError
from .transport.tcp import TcpRuntime, TcpTransport


def main(argv=None) -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--rank", type=int, required=True)
    parser.add_argument("--world", type=int, required=True)
    parser.add_argument("--port", type=int, required=True)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--config", required=True)
    parser.add_argument("--out", required=True)
    args = parser.parse_args(argv)

    def report_port(p):
        print(f"PORT {p}", flush=True)

    try:
        cfg = load_config(args.config)
        transport = TcpTransport.connect_world(
            args.world, args.rank, args.port, host=args.host,
            timeout_s=cfg.timeout_s,
            on_port=report_port if args.rank == 0 else None)
        try:
            report = rank_main(TcpRuntime(), transport.comm(), cfg)
        finally:
            transport.close()
        if args.rank == 0 and report is not None:
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            (out / "report.json").write_text(json.dumps(report.to_json_dict(), indent=1))
            np.save(out / "tensor.npy", report.tensor)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DeadlockError as exc:
        print(f"deadlock: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
