"""Experiment configuration: a single strict JSON file.

Unknown keys are rejected so sweep typos fail loudly.  The float value mode
is the default; the integer-lattice mode draws payload entries from a small
Gaussian-integer lattice so cross-path comparisons are bitwise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .transport.sim import SimLinkConfig

TRANSPORTS = ("inprocess", "sim", "tcp")
VALUE_MODES = ("float", "integer")
DIRECTIONS = ("forward", "alternate")
MAX_LANES = 1000


@dataclass
class SweepSettings:
    msg_bytes: int = 170_000_000
    measurements: int = 1400
    subrings: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        return {"msg_bytes": self.msg_bytes, "measurements": self.measurements,
                "subrings": list(self.subrings)}


@dataclass
class MemorySettings:
    entries: int | None = None       # default: derived from the index space (N^3)
    entry_bytes: int = 16
    matrix_bytes: float | None = None  # default: N^2 * entry_bytes

    def to_dict(self) -> dict:
        return {"entries": self.entries, "entry_bytes": self.entry_bytes,
                "matrix_bytes": self.matrix_bytes}


@dataclass
class ExperimentConfig:
    n_k: int
    n_w: int
    world_size: int
    subring_size: int
    lanes: int
    measurements: int
    seed: int = 0
    value_mode: str = "float"
    transport: str = "inprocess"
    direction: str = "forward"
    link: SimLinkConfig = field(default_factory=SimLinkConfig)
    timeout_s: float = 30.0
    instrument: bool = True
    out_dir: str | None = None
    sweep: SweepSettings = field(default_factory=SweepSettings)
    memory: MemorySettings = field(default_factory=MemorySettings)
    # test hooks; never part of the JSON schema
    ring_steps_override: int | None = None
    fault: str | None = None

    @property
    def space_size(self) -> int:
        return self.n_k * self.n_w

    def to_dict(self) -> dict:
        return {
            "n_k": self.n_k, "n_w": self.n_w,
            "world_size": self.world_size, "subring_size": self.subring_size,
            "lanes": self.lanes, "measurements": self.measurements,
            "seed": self.seed, "value_mode": self.value_mode,
            "transport": self.transport, "direction": self.direction,
            "timeout_s": self.timeout_s, "instrument": self.instrument,
            "out_dir": self.out_dir,
            "link": self.link.to_dict(),
            "sweep": self.sweep.to_dict(),
            "memory": self.memory.to_dict(),
        }


_TOP_KEYS = {"n_k", "n_w", "world_size", "subring_size", "lanes", "measurements",
             "seed", "value_mode", "transport", "direction", "timeout_s",
             "instrument", "out_dir", "link", "sweep", "memory"}
_LINK_KEYS = {"nic_bandwidth", "intra_bandwidth", "latency", "ranks_per_node"}
_SWEEP_KEYS = {"msg_bytes", "measurements", "subrings"}
_MEMORY_KEYS = {"entries", "entry_bytes", "matrix_bytes"}


def _reject_unknown(d: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigError(f"unknown {where} key(s): {', '.join(unknown)}")


def config_from_dict(d: dict) -> ExperimentConfig:
    if not isinstance(d, dict):
        raise ConfigError("config root must be a JSON object")
    _reject_unknown(d, _TOP_KEYS, "config")
    for req in ("n_k", "n_w", "world_size", "subring_size", "lanes", "measurements"):
        if req not in d:
            raise ConfigError(f"missing required config key: {req}")
    link_d = d.get("link", {})
    if not isinstance(link_d, dict):
        raise ConfigError("link must be an object")
    _reject_unknown(link_d, _LINK_KEYS, "link")
    sweep_d = d.get("sweep", {})
    if not isinstance(sweep_d, dict):
        raise ConfigError("sweep must be an object")
    _reject_unknown(sweep_d, _SWEEP_KEYS, "sweep")
    mem_d = d.get("memory", {})
    if not isinstance(mem_d, dict):
        raise ConfigError("memory must be an object")
    _reject_unknown(mem_d, _MEMORY_KEYS, "memory")

    cfg = ExperimentConfig(
        n_k=d["n_k"], n_w=d["n_w"],
        world_size=d["world_size"], subring_size=d["subring_size"],
        lanes=d["lanes"], measurements=d["measurements"],
        seed=d.get("seed", 0),
        value_mode=d.get("value_mode", "float"),
        transport=d.get("transport", "inprocess"),
        direction=d.get("direction", "forward"),
        timeout_s=d.get("timeout_s", 30.0),
        instrument=d.get("instrument", True),
        out_dir=d.get("out_dir"),
        link=SimLinkConfig(**{**SimLinkConfig().to_dict(), **link_d}),
        sweep=SweepSettings(
            msg_bytes=sweep_d.get("msg_bytes", 170_000_000),
            measurements=sweep_d.get("measurements", 1400),
            subrings=tuple(sweep_d.get("subrings", ()))),
        memory=MemorySettings(
            entries=mem_d.get("entries"),
            entry_bytes=mem_d.get("entry_bytes", 16),
            matrix_bytes=mem_d.get("matrix_bytes")),
    )
    validate_config(cfg)
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        d = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return config_from_dict(d)


def validate_config(cfg: ExperimentConfig) -> None:
    def positive(name, value):
        if not isinstance(value, int) or value < 1:
            raise ConfigError(f"{name} must be an integer >= 1, got {value!r}")

    positive("n_k", cfg.n_k)
    positive("n_w", cfg.n_w)
    positive("world_size", cfg.world_size)
    positive("subring_size", cfg.subring_size)
    positive("lanes", cfg.lanes)
    positive("measurements", cfg.measurements)
    if not isinstance(cfg.seed, int) or cfg.seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {cfg.seed!r}")
    if cfg.world_size % cfg.subring_size != 0:
        raise ConfigError(
            f"subring_size {cfg.subring_size} does not divide world_size {cfg.world_size}")
    if cfg.world_size > cfg.space_size:
        raise ConfigError(
            f"world_size {cfg.world_size} exceeds combined index count "
            f"{cfg.space_size}: some rank would own an empty slice")
    if cfg.lanes >= MAX_LANES:
        raise ConfigError(f"lanes must be < {MAX_LANES} (tag stride), got {cfg.lanes}")
    if cfg.value_mode not in VALUE_MODES:
        raise ConfigError(f"value_mode must be one of {VALUE_MODES}, got {cfg.value_mode!r}")
    if cfg.transport not in TRANSPORTS:
        raise ConfigError(f"transport must be one of {TRANSPORTS}, got {cfg.transport!r}")
    if cfg.direction not in DIRECTIONS:
        raise ConfigError(f"direction must be one of {DIRECTIONS}, got {cfg.direction!r}")
    if cfg.timeout_s <= 0:
        raise ConfigError("timeout_s must be positive")
