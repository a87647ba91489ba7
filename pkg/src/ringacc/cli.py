"""Command-line driver.

Subcommands: run, verify, sweep, memreport, predict.
Exit codes: 0 success, 2 config error, 3 verification failure, 4 deadlock.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

from .accuracy import verify
from .config import ExperimentConfig, load_config
from .engine import ExperimentReport, run_experiment
from .errors import ConfigError, DeadlockError, RingAccError
from .memory import make_plan
from .perf import fit_linear, model_utilization, run_sweep, slow_link

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VERIFY = 3
EXIT_DEADLOCK = 4

COUNTER_COLUMNS = ["rank", "lane", "envelopes_sent", "envelopes_received",
                   "bytes_sent", "bytes_received", "accumulations_applied",
                   "wait_s", "accumulate_s", "total_s"]
SWEEP_COLUMNS = ["S", "n_meas", "msg_bytes", "elapsed_s", "eff_bw_Bps", "predicted_s"]
PREDICT_COLUMNS = ["S", "n_meas", "msg_bytes", "predicted_s", "slow_link",
                   "slow_link_load", "step_s"]


def _out_dir(cfg: ExperimentConfig, override: str | None) -> Path:
    out = Path(override or cfg.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")


def plan_from_config(cfg: ExperimentConfig):
    n = cfg.space_size
    entries = cfg.memory.entries if cfg.memory.entries is not None else n ** 3
    matrix_bytes = (cfg.memory.matrix_bytes if cfg.memory.matrix_bytes is not None
                    else n * n * cfg.memory.entry_bytes)
    return make_plan(entries, cfg.memory.entry_bytes, matrix_bytes,
                     p=cfg.subring_size, k=cfg.lanes)


def write_report_files(report: ExperimentReport, out: Path,
                       cfg: ExperimentConfig | None = None) -> None:
    payload = report.to_json_dict()
    if cfg is not None:
        payload["memory_plan"] = plan_from_config(cfg).to_dict()
    _write_json(out / "report.json", payload)
    with (out / "counters.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COUNTER_COLUMNS)
        for (rank, lane), c in sorted(report.lane_counters.items()):
            d = c.to_dict()
            w.writerow([rank, lane] + [d[col] for col in COUNTER_COLUMNS[2:]])
    with (out / "memory.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time_s", "rank", "live_bytes"])
        for t, rank, live in report.memory_series:
            w.writerow([repr(t), rank, live])


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    updates = {}
    if getattr(args, "transport", None):
        updates["transport"] = args.transport
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    cfg = replace(cfg, **updates) if updates else cfg
    from .config import validate_config
    validate_config(cfg)
    return cfg


def _parse_subrings(args, cfg: ExperimentConfig) -> list[int]:
    if getattr(args, "subrings", None):
        try:
            values = [int(x) for x in args.subrings.split(",") if x.strip()]
        except ValueError:
            raise ConfigError(f"--subrings must be a comma list of integers, "
                              f"got {args.subrings!r}") from None
    else:
        values = list(cfg.sweep.subrings)
    if not values:
        raise ConfigError("no sub-ring sizes given (config sweep.subrings or --subrings)")
    return values


def cmd_run(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    if getattr(args, "fault", None):
        cfg = replace(cfg, fault=args.fault)
    report = run_experiment(cfg)
    out = _out_dir(cfg, args.out)
    write_report_files(report, out, cfg)
    print(f"run complete: world={cfg.world_size} S={cfg.subring_size} "
          f"k={cfg.lanes} M={cfg.measurements}; report in {out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    result = verify(cfg, runs=args.runs, corrupt=args.corrupt_entry)
    out = _out_dir(cfg, args.out)
    _write_json(out / "verify.json", result.to_dict())
    for metric in ("l1_real", "l1_imag", "l2_real", "l2_imag"):
        print(f"{metric}: {result.mean(metric):.3e} +/- {result.std(metric):.3e}")
    print(f"pass: {result.passed} ({args.runs} runs)")
    return EXIT_OK if result.passed else EXIT_VERIFY


def cmd_sweep(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    wanted = _parse_subrings(args, cfg)
    accepted = []
    for s in wanted:
        if s < 2:
            print(f"sweep: rejecting S={s}: need at least 2 ranks for "
                  f"communication", file=sys.stderr)
        elif cfg.world_size % s != 0:
            print(f"sweep: rejecting S={s}: does not divide world_size "
                  f"{cfg.world_size}", file=sys.stderr)
        else:
            accepted.append(s)
    if not accepted:
        raise ConfigError("sweep: no valid sub-ring sizes remain")
    rows = run_sweep(accepted, cfg.sweep.msg_bytes, cfg.sweep.measurements,
                     cfg.link, lanes=1, direction=cfg.direction)
    out = _out_dir(cfg, args.out)
    with (out / "sweep.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for point, bw, predicted in rows:
            w.writerow([point.subring_size, point.n_meas, point.msg_bytes,
                        repr(point.elapsed_s), repr(bw), repr(predicted)])
    fit = fit_linear([p for p, _, _ in rows]) if len(rows) >= 2 else None
    fit_payload: dict = {"points": len(rows)}
    if fit is not None:
        fit_payload.update(slope=fit.slope, intercept=fit.intercept,
                           r_squared=fit.r_squared)
    _write_json(out / "fit.json", fit_payload)
    for point, bw, predicted in rows:
        print(f"S={point.subring_size:4d} elapsed={point.elapsed_s:10.4f}s "
              f"eff_bw={bw / 1e9:6.2f} GB/s predicted={predicted:10.4f}s")
    if fit is not None:
        print(f"fit: slope={fit.slope:.6g} s/S intercept={fit.intercept:.6g} s "
              f"r^2={fit.r_squared:.5f}")
    return EXIT_OK


def cmd_memreport(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    entries = cfg.memory.entries if cfg.memory.entries is not None else cfg.space_size ** 3
    plan = plan_from_config(cfg)
    out = _out_dir(cfg, args.out)
    _write_json(out / "memory_plan.json", plan.to_dict())
    gb = 1e9
    print(f"G_t total:            {plan.gt_bytes_total / gb:8.3f} GB "
          f"({entries} entries x {cfg.memory.entry_bytes} B)")
    print(f"G_t per rank (p={plan.p}):   {plan.gt_bytes_per_rank / gb:8.3f} GB")
    print(f"payload buffers, original (k={plan.k}):    "
          f"{plan.gsigma_bytes_original / gb:8.3f} GB")
    print(f"payload buffers, distributed (k={plan.k}): "
          f"{plan.gsigma_bytes_distributed / gb:8.3f} GB")
    print(f"per-rank totals: original {plan.original_total_per_rank / gb:.3f} GB, "
          f"distributed {plan.distributed_total_per_rank / gb:.3f} GB "
          f"(break-even k = {plan.break_even_k:.2f})")
    return EXIT_OK


def cmd_predict(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    wanted = _parse_subrings(args, cfg)
    out = _out_dir(cfg, args.out)
    from .perf import predict_elapsed
    with (out / "predict.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PREDICT_COLUMNS)
        for s in wanted:
            if s < 1:
                print(f"predict: rejecting S={s}", file=sys.stderr)
                continue
            cls, load, bandwidth = slow_link(s, cfg.link)
            step = cfg.link.latency + cfg.sweep.msg_bytes * load / bandwidth
            predicted = predict_elapsed(s, cfg.sweep.measurements,
                                        cfg.sweep.msg_bytes, cfg.link)
            w.writerow([s, cfg.sweep.measurements, cfg.sweep.msg_bytes,
                        repr(predicted), cls, load, repr(step)])
            print(f"S={s:4d} predicted={predicted:10.4f}s slow_link={cls} "
                  f"load={load} utilization={model_utilization(s, cfg.link):.2f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ringacc",
        description="Pipeline ring broadcast experiments for a block-"
                    "distributed accumulation tensor")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--transport", choices=("inprocess", "sim", "tcp"),
                       help="override the configured transport")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--out", help="output directory (default: config out_dir or .)")

    p_run = sub.add_parser("run", help="run one experiment and write report artifacts")
    common(p_run)
    p_run.add_argument("--fault", choices=("skip-send",),
                       help="negative-control hook: inject a protocol fault")
    p_run.set_defaults(fn=cmd_run)

    p_verify = sub.add_parser("verify", help="compare the engine against the serial oracle")
    common(p_verify)
    p_verify.add_argument("--runs", type=int, default=5,
                          help="number of seeds (default 5)")
    p_verify.add_argument("--corrupt-entry", action="store_true",
                          help="negative-control hook: flip one tensor entry "
                               "before comparing")
    p_verify.set_defaults(fn=cmd_verify)

    p_sweep = sub.add_parser("sweep", help="simulated sub-ring size sweep + linear fit")
    common(p_sweep)
    p_sweep.add_argument("--subrings", help="comma list of sub-ring sizes")
    p_sweep.set_defaults(fn=cmd_sweep)

    p_mem = sub.add_parser("memreport", help="closed-form memory plan")
    common(p_mem)
    p_mem.set_defaults(fn=cmd_memreport)

    p_pred = sub.add_parser("predict", help="analytic elapsed-time prediction")
    common(p_pred)
    p_pred.add_argument("--subrings", help="comma list of sub-ring sizes")
    p_pred.set_defaults(fn=cmd_predict)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DeadlockError as exc:
        print(f"deadlock: {exc}", file=sys.stderr)
        return EXIT_DEADLOCK
    except RingAccError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
