"""Fixed-width 128-bit walk records.

Bit layout, low to high::

    source(42) | pre_offset(28) | cur_offset(28) | pre_block(10) | cur_block(10) | hop(10)

Previous and current vertices are stored as offsets inside their blocks and
are turned back into global ids through the start-vertex table.  On disk a
record is 16 little-endian bytes: the low 64-bit word first.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SOURCE_BITS = 42
OFFSET_BITS = 28
BLOCK_BITS = 10
HOP_BITS = 10

MAX_SOURCE = (1 << SOURCE_BITS) - 1
MAX_OFFSET = (1 << OFFSET_BITS) - 1
MAX_BLOCK = (1 << BLOCK_BITS) - 1
MAX_HOP = (1 << HOP_BITS) - 1

_PRE_OFF_SHIFT = SOURCE_BITS                      # 42
_CUR_OFF_SHIFT = _PRE_OFF_SHIFT + OFFSET_BITS     # 70
_PRE_BLK_SHIFT = _CUR_OFF_SHIFT + OFFSET_BITS     # 98
_CUR_BLK_SHIFT = _PRE_BLK_SHIFT + BLOCK_BITS      # 108
_HOP_SHIFT = _CUR_BLK_SHIFT + BLOCK_BITS          # 118

RECORD_BYTES = 16
# records are (n, 2) arrays of little-endian u64: column 0 = bits 0..63
RECORD_DTYPE = np.dtype("<u8")


@dataclass(frozen=True)
class WalkFields:
    source: int
    pre_offset: int
    cur_offset: int
    pre_block: int
    cur_block: int
    hop: int


_LIMITS = (
    ("source", MAX_SOURCE),
    ("pre_offset", MAX_OFFSET),
    ("cur_offset", MAX_OFFSET),
    ("pre_block", MAX_BLOCK),
    ("cur_block", MAX_BLOCK),
    ("hop", MAX_HOP),
)


def encode(f: WalkFields) -> int:
    for name, limit in _LIMITS:
        value = getattr(f, name)
        if not 0 <= value <= limit:
            raise ValueError(f"{name}={value} outside [0, {limit}]")
    return (
        f.source
        | f.pre_offset << _PRE_OFF_SHIFT
        | f.cur_offset << _CUR_OFF_SHIFT
        | f.pre_block << _PRE_BLK_SHIFT
        | f.cur_block << _CUR_BLK_SHIFT
        | f.hop << _HOP_SHIFT
    )


def decode(raw: int) -> WalkFields:
    raw &= (1 << 128) - 1
    return WalkFields(
        source=raw & MAX_SOURCE,
        pre_offset=(raw >> _PRE_OFF_SHIFT) & MAX_OFFSET,
        cur_offset=(raw >> _CUR_OFF_SHIFT) & MAX_OFFSET,
        pre_block=(raw >> _PRE_BLK_SHIFT) & MAX_BLOCK,
        cur_block=(raw >> _CUR_BLK_SHIFT) & MAX_BLOCK,
        hop=(raw >> _HOP_SHIFT) & MAX_HOP,
    )


def to_bytes(raw: int) -> bytes:
    return raw.to_bytes(RECORD_BYTES, "little")


def from_bytes(data: bytes) -> int:
    if len(data) != RECORD_BYTES:
        raise ValueError(f"walk record must be {RECORD_BYTES} bytes, got {len(data)}")
    return int.from_bytes(data, "little")


def global_vertex(offset: int, block: int, starts) -> int:
    """Global id of the vertex at ``offset`` inside ``block``."""
    lo, hi = int(starts[block]), int(starts[block + 1])
    if not 0 <= offset < hi - lo:
        raise ValueError(f"offset {offset} outside block {block} span {hi - lo}")
    return lo + offset


# -- vectorised forms -------------------------------------------------------

def empty_records(n: int = 0) -> np.ndarray:
    return np.zeros((n, 2), dtype=RECORD_DTYPE)


def encode_batch(source, pre_offset, cur_offset, pre_block, cur_block, hop) -> np.ndarray:
    cols = [np.asarray(a).astype(np.uint64, copy=False) for a in
            (source, pre_offset, cur_offset, pre_block, cur_block, hop)]
    for (name, limit), col in zip(_LIMITS, cols):
        if col.size and int(col.max()) > limit:
            raise ValueError(f"{name} exceeds {limit}")
    s, po, co, pb, cb, h = cols
    out = np.empty((s.shape[0], 2), dtype=RECORD_DTYPE)
    out[:, 0] = s | (po << np.uint64(_PRE_OFF_SHIFT))
    out[:, 1] = (
        (po >> np.uint64(64 - _PRE_OFF_SHIFT))
        | (co << np.uint64(_CUR_OFF_SHIFT - 64))
        | (pb << np.uint64(_PRE_BLK_SHIFT - 64))
        | (cb << np.uint64(_CUR_BLK_SHIFT - 64))
        | (h << np.uint64(_HOP_SHIFT - 64))
    )
    return out


@dataclass
class WalkBatch:
    """Decoded columns of a record array (all int64)."""

    source: np.ndarray
    pre_offset: np.ndarray
    cur_offset: np.ndarray
    pre_block: np.ndarray
    cur_block: np.ndarray
    hop: np.ndarray

    def __len__(self) -> int:
        return len(self.source)


def _mask(bits: int) -> np.uint64:
    return np.uint64((1 << bits) - 1)


def decode_batch(records: np.ndarray) -> WalkBatch:
    records = np.asarray(records, dtype=RECORD_DTYPE).reshape(-1, 2)
    lo, hi = records[:, 0], records[:, 1]
    low_part = 64 - _PRE_OFF_SHIFT  # bits of pre_offset held in the low word
    pre = (lo >> np.uint64(_PRE_OFF_SHIFT)) | (
        (hi & _mask(OFFSET_BITS - low_part)) << np.uint64(low_part))
    return WalkBatch(
        source=(lo & _mask(SOURCE_BITS)).astype(np.int64),
        pre_offset=pre.astype(np.int64),
        cur_offset=((hi >> np.uint64(_CUR_OFF_SHIFT - 64)) & _mask(OFFSET_BITS)).astype(np.int64),
        pre_block=((hi >> np.uint64(_PRE_BLK_SHIFT - 64)) & _mask(BLOCK_BITS)).astype(np.int64),
        cur_block=((hi >> np.uint64(_CUR_BLK_SHIFT - 64)) & _mask(BLOCK_BITS)).astype(np.int64),
        hop=(hi >> np.uint64(_HOP_SHIFT - 64)).astype(np.int64),
    )


def record_hops(records: np.ndarray) -> np.ndarray:
    return (records[:, 1] >> np.uint64(_HOP_SHIFT - 64)).astype(np.int64)


def record_to_int(record) -> int:
    return int(record[0]) | int(record[1]) << 64


def int_to_record(raw: int) -> np.ndarray:
    return np.array([[raw & (2**64 - 1), raw >> 64]], dtype=RECORD_DTYPE)
