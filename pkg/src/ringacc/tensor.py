"""Combined index space, measurement payloads, and the accumulation kernel.

The accumulation tensor ``G_t(K1, K2, K3)`` lives on a discrete combined
index space (momentum x frequency collapsed into one integer ``K``).  Every
measurement produces one pair of spin-indexed ``N x N`` matrices (``GSigma``)
and updates the tensor entrywise:

    G_t(K1, K2, K3) += sum_sigma  G_sigma(K3 - K2, K3 - K1) * G_{-sigma}(K2, K1)

Index differences are cyclic (mod N) so the kernel is total and desk-scale
brute-force oracles are exact.  ``G_t`` is stored partition-axis first:
``data[k3 - lo, k1, k2]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation

ENTRY_BYTES = 16  # double-precision complex

VALUE_MODES = ("float", "integer")

_GOLDEN = 0x9E3779B97F4A7C15
_MASK64 = 0xFFFFFFFFFFFFFFFF


@dataclass(frozen=True)
class CombinedIndexSpace:
    """Discrete index group for K points: ``size = n_k * n_w``."""

    n_k: int
    n_w: int

    def __post_init__(self):
        if self.n_k < 1 or self.n_w < 1:
            raise ContractViolation(f"index space dims must be >= 1, got ({self.n_k}, {self.n_w})")

    @property
    def size(self) -> int:
        return self.n_k * self.n_w

    def diff(self, a: int, b: int) -> int:
        return index_diff(a, b, self)


def index_diff(a: int, b: int, space: CombinedIndexSpace) -> int:
    """Cyclic K-difference ``(a - b) mod N``; closed on [0, N)."""
    n = space.size
    if not (0 <= a < n and 0 <= b < n):
        raise ContractViolation(f"index out of range: a={a}, b={b}, N={n}")
    return (a - b) % n


@dataclass(frozen=True)
class Origin:
    """Provenance of one measurement payload.

    ``world_rank`` is the flat rank (subring * subring_size + rank); the
    generator keys its stream on it so payload content does not depend on how
    ranks are grouped into sub-rings.
    """

    subring: int
    rank: int
    lane: int
    meas: int
    world_rank: int

    def sort_key(self):
        return (self.subring, self.rank, self.lane, self.meas)


@dataclass
class GSigma:
    """One measurement's payload: spin-up and spin-down N x N complex matrices."""

    space: CombinedIndexSpace
    up: np.ndarray
    down: np.ndarray
    origin: Origin

    @property
    def nbytes(self) -> int:
        # two spin matrices of complex doubles
        return 2 * self.space.size ** 2 * ENTRY_BYTES

    @classmethod
    def empty(cls, space: CombinedIndexSpace, origin: Origin | None = None) -> "GSigma":
        n = space.size
        o = origin or Origin(0, 0, 0, 0, 0)
        return cls(space, np.zeros((n, n), dtype=np.complex128),
                   np.zeros((n, n), dtype=np.complex128), o)


@dataclass
class GtSlice:
    """A contiguous block of the accumulation tensor along the K3 axis.

    ``data[j, k1, k2]`` holds ``G_t(k1, k2, lo + j)``.
    """

    space: CombinedIndexSpace
    lo: int
    hi: int
    data: np.ndarray
    meas_count: int = 0

    def __post_init__(self):
        n = self.space.size
        if not (0 <= self.lo < self.hi <= n):
            raise ContractViolation(f"invalid axis range [{self.lo}, {self.hi}) for N={n}")

    @property
    def entries(self) -> int:
        return (self.hi - self.lo) * self.space.size ** 2

    @property
    def nbytes(self) -> int:
        return self.entries * ENTRY_BYTES

    @property
    def is_full(self) -> bool:
        return self.lo == 0 and self.hi == self.space.size

    @classmethod
    def zeros(cls, space: CombinedIndexSpace, lo: int, hi: int) -> "GtSlice":
        n = space.size
        return cls(space, lo, hi, np.zeros((hi - lo, n, n), dtype=np.complex128))

    @classmethod
    def zeros_full(cls, space: CombinedIndexSpace) -> "GtSlice":
        return cls.zeros(space, 0, space.size)


@dataclass(frozen=True)
class PartitionPlan:
    """Balanced contiguous split of the K3 axis over p ranks."""

    n: int
    p: int
    ranges: tuple[tuple[int, int], ...]


def make_partition(n: int, p: int) -> PartitionPlan:
    """Split [0, n) into p contiguous ranges differing in size by at most 1.

    The remainder goes to the lowest-index ranks.
    """
    if p < 1:
        raise ContractViolation(f"partition count must be >= 1, got {p}")
    if p > n:
        raise ContractViolation(f"cannot split axis of length {n} over {p} ranks: empty slice")
    base, rem = divmod(n, p)
    ranges = []
    lo = 0
    for i in range(p):
        hi = lo + base + (1 if i < rem else 0)
        ranges.append((lo, hi))
        lo = hi
    return PartitionPlan(n, p, tuple(ranges))


# --- deterministic counter-based generation ---------------------------------

def _mix64(z: np.ndarray | int):
    """SplitMix64 finalizer; avalanche-mixes a 64-bit counter."""
    if isinstance(z, (int, np.integer)):
        z = (int(z) + _GOLDEN) & _MASK64
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)
    z = z + np.uint64(_GOLDEN)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _stream_key(seed: int, origin: Origin, matrix: int) -> int:
    k = _mix64(seed & _MASK64)
    for part in (origin.world_rank, origin.lane, origin.meas, matrix):
        k = _mix64(k ^ (part & _MASK64))
    return k


def _uniform01(bits: np.ndarray) -> np.ndarray:
    # top 53 bits -> [0, 1)
    return (bits >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)


def _matrix_entries(seed: int, origin: Origin, matrix: int, n: int, mode: str) -> np.ndarray:
    key = np.uint64(_stream_key(seed, origin, matrix))
    idx = np.arange(n * n, dtype=np.uint64)
    u1 = _uniform01(_mix64(key ^ (idx * np.uint64(2))))
    u2 = _uniform01(_mix64(key ^ (idx * np.uint64(2) + np.uint64(1))))
    if mode == "float":
        # uniform on the closed unit disk: |entry| <= 1
        r = np.sqrt(u1)
        theta = 2.0 * np.pi * u2
        vals = r * np.cos(theta) + 1j * r * np.sin(theta)
    elif mode == "integer":
        # Gaussian-integer lattice {-2..2}: exactly representable, so any
        # accumulation order is bitwise identical
        re = np.floor(u1 * 5.0) - 2.0
        im = np.floor(u2 * 5.0) - 2.0
        vals = re + 1j * im
    else:
        raise ContractViolation(f"unknown value mode {mode!r}")
    return vals.reshape(n, n)


def fill_gsigma(g: GSigma, seed: int, origin: Origin, mode: str = "float") -> None:
    """Regenerate a payload in place (no buffer allocation)."""
    n = g.space.size
    g.up[:] = _matrix_entries(seed, origin, 0, n, mode)
    g.down[:] = _matrix_entries(seed, origin, 1, n, mode)
    g.origin = origin


def generate_gsigma(seed: int, origin: Origin, space: CombinedIndexSpace,
                    mode: str = "float") -> GSigma:
    """Deterministic payload: same (seed, origin) always yields bitwise-equal matrices."""
    g = GSigma.empty(space, origin)
    fill_gsigma(g, seed, origin, mode)
    return g


# --- accumulation kernel -----------------------------------------------------

def accumulate_g4(slice_: GtSlice, g: GSigma) -> None:
    """Apply one measurement to the K3 planes owned by this slice.

    For each owned K3:
        G_t(K1, K2, K3) += sum_sigma G_sigma(K3-K2, K3-K1) * G_{-sigma}(K2, K1)
    Entries outside [lo, hi) are untouched; meas_count increments by 1.
    """
    if slice_.space != g.space:
        raise ContractViolation(
            f"space mismatch: slice {slice_.space} vs payload {g.space}")
    n = slice_.space.size
    up, down = g.up, g.down
    ar = np.arange(n)
    for k3 in range(slice_.lo, slice_.hi):
        idx = (k3 - ar) % n
        u = up[np.ix_(idx, idx)]    # u[K2, K1] = up[K3-K2, K3-K1]
        d = down[np.ix_(idx, idx)]
        slice_.data[k3 - slice_.lo] += (u * down + d * up).T
    slice_.meas_count += 1


# --- serial oracle -----------------------------------------------------------

@dataclass(frozen=True)
class ExperimentShape:
    """Logical shape of a distributed run: every (subring, rank, lane, meas) tuple."""

    subrings: int
    subring_size: int
    lanes: int
    measurements: int

    def origins(self) -> list[Origin]:
        out = []
        for s in range(self.subrings):
            for r in range(self.subring_size):
                for t in range(self.lanes):
                    for m in range(self.measurements):
                        out.append(Origin(s, r, t, m, s * self.subring_size + r))
        out.sort(key=Origin.sort_key)
        return out


def oracle_accumulate(seed: int, shape: ExperimentShape, space: CombinedIndexSpace,
                      mode: str = "float") -> GtSlice:
    """Serial ground truth: regenerate every payload and accumulate into a full
    tensor in canonical origin order."""
    full = GtSlice.zeros_full(space)
    for origin in shape.origins():
        accumulate_g4(full, generate_gsigma(seed, origin, space, mode))
    return full
