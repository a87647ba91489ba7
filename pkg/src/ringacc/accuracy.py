"""Normalized L1/L2 error metrics and the verification harness.

Both metrics are relative entrywise norms of the difference between the
serial reference tensor and the distributed result, computed separately on
real and imaginary parts.  The pass gate is 5e-7 on all four values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import UndefinedNormError
from .tensor import CombinedIndexSpace, ExperimentShape, oracle_accumulate

THRESHOLD = 5e-7

_METRICS = ("l1_real", "l1_imag", "l2_real", "l2_imag")


def l1_error(ref: np.ndarray, test: np.ndarray) -> float:
    """||vec(ref - test)||_1 / ||vec(ref)||_1 (entrywise norm)."""
    denom = np.abs(ref).sum()
    if denom == 0:
        raise UndefinedNormError("L1 error undefined for an all-zero reference")
    return float(np.abs(np.subtract(ref, test)).sum() / denom)


def l2_error(ref: np.ndarray, test: np.ndarray) -> float:
    """||vec(ref - test)||_2 / ||vec(ref)||_2 (entrywise norm)."""
    denom = math.sqrt(float((np.abs(ref) ** 2).sum()))
    if denom == 0:
        raise UndefinedNormError("L2 error undefined for an all-zero reference")
    num = math.sqrt(float((np.abs(np.subtract(ref, test)) ** 2).sum()))
    return num / denom


@dataclass(frozen=True)
class ErrorReport:
    l1_real: float
    l1_imag: float
    l2_real: float
    l2_imag: float

    @property
    def passed(self) -> bool:
        return all(getattr(self, m) < THRESHOLD for m in _METRICS)

    def to_dict(self) -> dict:
        d = {m: getattr(self, m) for m in _METRICS}
        d["pass"] = self.passed
        return d


def compare(ref: np.ndarray, test: np.ndarray) -> ErrorReport:
    """Component-wise error report between two complex tensors."""
    return ErrorReport(
        l1_real=l1_error(ref.real, test.real),
        l1_imag=l1_error(ref.imag, test.imag),
        l2_real=l2_error(ref.real, test.real),
        l2_imag=l2_error(ref.imag, test.imag),
    )


@dataclass
class VerifyResult:
    """Aggregate of one verification run per seed: mean +/- sample stddev."""

    reports: list[ErrorReport]
    seeds: list[int]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports)

    def mean(self, metric: str) -> float:
        return float(np.mean([getattr(r, metric) for r in self.reports]))

    def std(self, metric: str) -> float:
        vals = [getattr(r, metric) for r in self.reports]
        if len(vals) < 2:
            return 0.0
        return float(np.std(vals, ddof=1))

    def to_dict(self) -> dict:
        d = {m: self.mean(m) for m in _METRICS}
        d["pass"] = self.passed
        d["runs"] = [
            {"seed": s, **r.to_dict()} for s, r in zip(self.seeds, self.reports)
        ]
        d["std"] = {m: self.std(m) for m in _METRICS}
        return d


def oracle_for_config(cfg, seed: int | None = None):
    shape = ExperimentShape(
        subrings=cfg.world_size // cfg.subring_size,
        subring_size=cfg.subring_size,
        lanes=cfg.lanes,
        measurements=cfg.measurements)
    space = CombinedIndexSpace(cfg.n_k, cfg.n_w)
    return oracle_accumulate(seed if seed is not None else cfg.seed,
                             shape, space, cfg.value_mode)


def verify(cfg, runs: int = 5, corrupt: bool = False) -> VerifyResult:
    """Run the distributed engine and the serial oracle with the same seed
    scheme over `runs` seeds and gate every metric at 5e-7.

    `corrupt` flips one entry of the distributed result first (negative
    control for the harness itself).
    """
    from dataclasses import replace
    from .engine import run_experiment

    reports, seeds = [], []
    for i in range(runs):
        seed = cfg.seed + i
        run_cfg = replace(cfg, seed=seed)
        report = run_experiment(run_cfg)
        tensor = report.tensor
        if corrupt:
            tensor = tensor.copy()
            tensor.flat[0] += 1.0 + 1.0j
        ref = oracle_for_config(cfg, seed)
        reports.append(compare(ref.data, tensor))
        seeds.append(seed)
    return VerifyResult(reports, seeds)
