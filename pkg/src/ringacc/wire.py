"""Serialization: fixed payload headers plus raw complex doubles, little-endian.

The same byte layout is used by every transport so cross-transport results
are bit-exact.  GSigma header fields: space dims, origin tuple, payload byte
length.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import ContractViolation
from .tensor import CombinedIndexSpace, GSigma, Origin

_GSIGMA_HEADER = struct.Struct("<7IQ")  # n_k, n_w, subring, rank, lane, meas, world_rank, nbytes
GSIGMA_HEADER_BYTES = _GSIGMA_HEADER.size

_ARRAY_HEADER = struct.Struct("<Q")  # ndim, then ndim u64 dims


def gsigma_wire_bytes(space: CombinedIndexSpace) -> int:
    return GSIGMA_HEADER_BYTES + 2 * space.size ** 2 * 16


def serialize_gsigma(g: GSigma) -> bytes:
    o = g.origin
    body_len = g.nbytes
    header = _GSIGMA_HEADER.pack(g.space.n_k, g.space.n_w, o.subring, o.rank,
                                 o.lane, o.meas, o.world_rank, body_len)
    return header + g.up.astype("<c16", copy=False).tobytes() + \
        g.down.astype("<c16", copy=False).tobytes()


def peek_origin(payload: bytes) -> Origin:
    _, _, sub, rank, lane, meas, wr, _ = _GSIGMA_HEADER.unpack_from(payload)
    return Origin(sub, rank, lane, meas, wr)


def deserialize_gsigma_into(g: GSigma, payload: bytes) -> None:
    """Copy a serialized payload into existing buffers; allocates nothing GSigma-sized."""
    n_k, n_w, sub, rank, lane, meas, wr, body_len = _GSIGMA_HEADER.unpack_from(payload)
    if (n_k, n_w) != (g.space.n_k, g.space.n_w):
        raise ContractViolation(
            f"payload space ({n_k},{n_w}) does not match buffer space "
            f"({g.space.n_k},{g.space.n_w})")
    if body_len != g.nbytes or len(payload) != GSIGMA_HEADER_BYTES + body_len:
        raise ContractViolation("payload length mismatch")
    n = g.space.size
    flat = np.frombuffer(payload, dtype="<c16", offset=GSIGMA_HEADER_BYTES)
    np.copyto(g.up, flat[:n * n].reshape(n, n))
    np.copyto(g.down, flat[n * n:].reshape(n, n))
    g.origin = Origin(sub, rank, lane, meas, wr)


def serialize_array(arr: np.ndarray) -> bytes:
    a = np.ascontiguousarray(arr, dtype=np.complex128)
    header = _ARRAY_HEADER.pack(a.ndim) + b"".join(
        struct.pack("<Q", d) for d in a.shape)
    return header + a.astype("<c16", copy=False).tobytes()


def deserialize_array(payload: bytes) -> np.ndarray:
    (ndim,) = _ARRAY_HEADER.unpack_from(payload)
    off = _ARRAY_HEADER.size
    shape = []
    for _ in range(ndim):
        (d,) = struct.unpack_from("<Q", payload, off)
        shape.append(d)
        off += 8
    flat = np.frombuffer(payload, dtype="<c16", offset=off)
    return flat.reshape(shape).astype(np.complex128)
