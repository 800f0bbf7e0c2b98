import numpy as np
import pytest
from hypothesis import given, strategies as st

from grasorw import walk_codec as wc

FIELD_BITS = [("source", 42), ("pre_offset", 28), ("cur_offset", 28), ("pre_block", 10),
              ("cur_block", 10), ("hop", 10)]


def shift_or(**fields):
    """Independent packing oracle: fields laid out low to high in declaration order."""
    raw, shift = 0, 0
    for name, bits in FIELD_BITS:
        raw |= fields[name] << shift
        shift += bits
    return raw


def test_zero_record():
    f = wc.WalkFields(0, 0, 0, 0, 0, 0)
    assert wc.encode(f) == 0
    assert wc.decode(0) == f


def test_all_max_sets_every_bit():
    f = wc.WalkFields(2**42 - 1, 2**28 - 1, 2**28 - 1, 1023, 1023, 1023)
    assert wc.encode(f) == 2**128 - 1
    assert wc.decode(2**128 - 1) == f


def test_known_value_matches_oracle():
    f = wc.WalkFields(source=5, pre_offset=3, cur_offset=7, pre_block=1, cur_block=2, hop=9)
    assert wc.encode(f) == shift_or(source=5, pre_offset=3, cur_offset=7, pre_block=1,
                                    cur_block=2, hop=9)


@pytest.mark.parametrize("bad", [dict(source=2**42), dict(pre_offset=2**28), dict(hop=1024),
                                 dict(cur_block=-1)])
def test_out_of_range_rejected(bad):
    kw = dict(source=0, pre_offset=0, cur_offset=0, pre_block=0, cur_block=0, hop=0) | bad
    with pytest.raises(ValueError):
        wc.encode(wc.WalkFields(**kw))


fields = st.builds(wc.WalkFields, st.integers(0, 2**42 - 1), st.integers(0, 2**28 - 1),
                   st.integers(0, 2**28 - 1), st.integers(0, 1023), st.integers(0, 1023),
                   st.integers(0, 1023))


@given(fields)
def test_scalar_roundtrip_and_bytes(f):
    raw = wc.encode(f)
    assert raw == shift_or(**f.__dict__)
    assert wc.decode(raw) == f
    assert wc.from_bytes(wc.to_bytes(raw)) == raw
    assert len(wc.to_bytes(raw)) == 16


@given(st.lists(fields, min_size=1, max_size=50))
def test_batch_agrees_with_scalar(fs):
    cols = [np.array([getattr(f, n) for f in fs]) for n, _ in FIELD_BITS]
    recs = wc.encode_batch(*cols)
    for k, f in enumerate(fs):
        assert wc.record_to_int(recs[k]) == wc.encode(f)
    back = wc.decode_batch(recs)
    for (n, _), c in zip(FIELD_BITS, cols):
        assert np.array_equal(getattr(back, n), c)


def test_global_vertex():
    starts = np.array([0, 4, 9, 20])
    assert wc.global_vertex(0, 0, starts) == 0
    for k in range(3):
        assert wc.global_vertex(0, k, starts) == starts[k]
    for v in range(20):
        b = int(np.searchsorted(starts, v, side="right") - 1)
        assert wc.global_vertex(v - starts[b], b, starts) == v
