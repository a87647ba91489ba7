import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ringacc.errors import ContractViolation
from ringacc.tensor import CombinedIndexSpace, GSigma, Origin, generate_gsigma
from ringacc.wire import (GSIGMA_HEADER_BYTES, deserialize_array,
                          deserialize_gsigma_into, gsigma_wire_bytes,
                          peek_origin, serialize_array, serialize_gsigma)


def test_round_trip_bitwise():
    sp = CombinedIndexSpace(2, 3)
    g = generate_gsigma(13, Origin(1, 2, 3, 4, 5), sp)
    buf = GSigma.empty(sp)
    deserialize_gsigma_into(buf, serialize_gsigma(g))
    assert np.array_equal(buf.up, g.up)
    assert np.array_equal(buf.down, g.down)
    assert buf.origin == g.origin


def test_wire_length_is_header_plus_matrices():
    sp = CombinedIndexSpace(2, 2)
    g = generate_gsigma(0, Origin(0, 0, 0, 0, 0), sp)
    data = serialize_gsigma(g)
    assert len(data) == GSIGMA_HEADER_BYTES + 2 * sp.size ** 2 * 16
    assert len(data) == gsigma_wire_bytes(sp)


def test_peek_origin():
    sp = CombinedIndexSpace(1, 2)
    g = generate_gsigma(0, Origin(9, 8, 7, 6, 5), sp)
    assert peek_origin(serialize_gsigma(g)) == Origin(9, 8, 7, 6, 5)


def test_space_mismatch_rejected():
    g = generate_gsigma(0, Origin(0, 0, 0, 0, 0), CombinedIndexSpace(2, 2))
    buf = GSigma.empty(CombinedIndexSpace(2, 3))
    with pytest.raises(ContractViolation):
        deserialize_gsigma_into(buf, serialize_gsigma(g))


def test_deserialize_reuses_buffers():
    sp = CombinedIndexSpace(2, 2)
    g = generate_gsigma(3, Origin(0, 0, 0, 0, 0), sp)
    buf = GSigma.empty(sp)
    up_before, down_before = buf.up, buf.down
    deserialize_gsigma_into(buf, serialize_gsigma(g))
    assert buf.up is up_before and buf.down is down_before


@given(st.lists(st.integers(1, 4), min_size=1, max_size=3), st.integers(0, 2 ** 31))
def test_array_round_trip(shape, seed):
    rng = np.random.default_rng(seed)
    arr = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    out = deserialize_array(serialize_array(arr))
    assert out.shape == tuple(shape)
    assert np.array_equal(out, arr)
