"""Walk pools, buckets and per-thread append buffers.

Pools live under ``<workdir>/walks/pool_<k>.bin`` as raw 16-byte records plus
an in-memory segment that is flushed once it reaches ``flush_threshold``.
Pools and buckets are only mutated at drain points, when worker threads are
quiescent; workers append to their own :class:`ThreadBuffer` instead.
"""
from __future__ import annotations

import os
from collections import defaultdict
from pathlib import Path

import numpy as np

from .walk_codec import RECORD_BYTES, RECORD_DTYPE, decode_batch, empty_records, record_hops

DEFAULT_FLUSH_THRESHOLD = 64 * 1024

SKEWED = "skewed"      # pool = min{B(u), B(v)}
BY_CURRENT = "current"  # pool = B(v), the plain bucket layout


class PoolLawError(ValueError):
    pass


def pool_law(records: np.ndarray, law: str = SKEWED) -> np.ndarray:
    f = decode_batch(records)
    if law == SKEWED:
        return np.minimum(f.pre_block, f.cur_block)
    return f.cur_block


def _concat(parts) -> np.ndarray:
    parts = [p for p in parts if len(p)]
    if not parts:
        return empty_records()
    return parts[0] if len(parts) == 1 else np.concatenate(parts)


class WalkPool:
    def __init__(self, block: int, path: Path, flush_threshold: int = DEFAULT_FLUSH_THRESHOLD):
        self.block = block
        self.path = Path(path)
        self.flush_threshold = flush_threshold
        self.memory_segment: list[np.ndarray] = []
        self._mem_count = 0
        self._disk_count = 0
        self.min_hop: int | None = None
        self.bytes_written = 0

    def __len__(self) -> int:
        return self._mem_count + self._disk_count

    def append(self, records: np.ndarray) -> None:
        if not len(records):
            return
        self.memory_segment.append(records)
        self._mem_count += len(records)
        h = int(record_hops(records).min())
        self.min_hop = h if self.min_hop is None else min(self.min_hop, h)
        if self._mem_count >= self.flush_threshold:
            self.flush()

    def flush(self) -> None:
        if not self._mem_count:
            return
        data = _concat(self.memory_segment)
        with open(self.path, "ab") as fh:
            fh.write(data.astype(RECORD_DTYPE, copy=False).tobytes())
        self.bytes_written += data.nbytes
        self._disk_count += len(data)
        self.memory_segment = []
        self._mem_count = 0

    def _read_disk(self) -> np.ndarray:
        if not self.path.exists():
            return empty_records()
        raw = self.path.read_bytes()
        if len(raw) % RECORD_BYTES:
            raise ValueError(f"corrupt walk pool {self.path}: {len(raw)} bytes")
        return np.frombuffer(raw, dtype=RECORD_DTYPE).reshape(-1, 2).copy()

    def scan(self) -> np.ndarray:
        """All walks of the pool without draining it."""
        return _concat([self._read_disk()] + self.memory_segment)

    def drain(self) -> np.ndarray:
        data = self.scan()
        if self.path.exists():
            os.remove(self.path)
        self.memory_segment = []
        self._mem_count = self._disk_count = 0
        self.min_hop = None
        return data


class WalkPools:
    """One pool per block, enforcing the storage law on every association."""

    def __init__(self, workdir, block_count: int, law: str = SKEWED,
                 flush_threshold: int = DEFAULT_FLUSH_THRESHOLD):
        self.dir = Path(workdir) / "walks"
        self.dir.mkdir(parents=True, exist_ok=True)
        for stale in self.dir.glob("pool_*.bin"):
            stale.unlink()
        self.law = law
        self.pools = [WalkPool(k, self.dir / f"pool_{k}.bin", flush_threshold)
                      for k in range(block_count)]
        self.walk_io_bytes = 0

    def __len__(self) -> int:
        return sum(len(p) for p in self.pools)

    def __getitem__(self, k: int) -> WalkPool:
        return self.pools[k]

    def counts(self) -> np.ndarray:
        return np.array([len(p) for p in self.pools], dtype=np.int64)

    def min_hops(self) -> np.ndarray:
        big = np.iinfo(np.int64).max
        return np.array([big if p.min_hop is None else p.min_hop for p in self.pools])

    def associate_with_block(self, records: np.ndarray, block: int) -> None:
        records = np.asarray(records, dtype=RECORD_DTYPE).reshape(-1, 2)
        if not len(records):
            return
        f = decode_batch(records)
        if np.any(f.pre_block == f.cur_block):
            raise PoolLawError("walk with previous and current vertex in the same block")
        target = pool_law(records, self.law)
        if np.any(target != block):
            raise PoolLawError(f"walks do not belong to pool {block} under the {self.law} law")
        self.pools[block].append(records)

    def associate(self, records: np.ndarray) -> None:
        """Route every record to the pool its storage law names."""
        if not len(records):
            return
        target = pool_law(records, self.law)
        for k in np.unique(target):
            self.associate_with_block(records[target == k], int(k))

    def load_walks(self, block: int) -> np.ndarray:
        data = self.pools[block].drain()
        self.walk_io_bytes += RECORD_BYTES * len(data)
        return data

    def scan_all(self) -> list[np.ndarray]:
        return [p.scan() for p in self.pools]

    def bytes_flushed(self) -> int:
        return sum(p.bytes_written for p in self.pools)

    def cleanup(self) -> None:
        for p in self.pools:
            p.drain()


class Bucket:
    def __init__(self, partner_block: int):
        self.partner_block = partner_block
        self.walks: list[np.ndarray] = []

    def __len__(self) -> int:
        return sum(len(w) for w in self.walks)

    def extend(self, records: np.ndarray) -> None:
        if len(records):
            self.walks.append(records)

    def take(self) -> np.ndarray:
        data = _concat(self.walks)
        self.walks = []
        return data


def collect_buckets(current_walks: np.ndarray, b: int, block_count: int) -> list[Bucket]:
    """Split the walks of time slot ``b`` by the block paired with ``b``.

    A walk goes to the bucket of its current block when its previous vertex is
    in ``b`` and to the bucket of its previous block otherwise.
    """
    buckets = [Bucket(i) for i in range(block_count)]
    if not len(current_walks):
        return buckets
    f = decode_batch(current_walks)
    in_pre = f.pre_block == b
    in_cur = f.cur_block == b
    if np.any(in_pre & in_cur):
        raise PoolLawError("walk with both endpoints in the current block")
    if np.any(~in_pre & ~in_cur):
        raise PoolLawError(f"walk with neither endpoint in block {b}")
    partner = np.where(in_pre, f.cur_block, f.pre_block)
    order = np.argsort(partner, kind="stable")
    part_sorted = partner[order]
    keys, first = np.unique(part_sorted, return_index=True)
    bounds = list(first) + [len(order)]
    for k, lo, hi in zip(keys, bounds[:-1], bounds[1:]):
        buckets[int(k)].extend(current_walks[order[lo:hi]])
    return buckets


class ThreadBuffer:
    """Append-only staging area owned by one worker thread."""

    def __init__(self, owner_thread: int):
        self.owner_thread = owner_thread
        self.per_target: dict[tuple, list[np.ndarray]] = defaultdict(list)

    def append(self, target: tuple, records: np.ndarray) -> None:
        if len(records):
            self.per_target[target].append(np.asarray(records, dtype=RECORD_DTYPE).reshape(-1, 2))

    def pop(self, target: tuple) -> list[np.ndarray]:
        return self.per_target.pop(target, [])

    def targets(self) -> list[tuple]:
        return list(self.per_target)

    def pending(self) -> int:
        return sum(len(a) for parts in self.per_target.values() for a in parts)


def buffer_append(tb: ThreadBuffer, target: tuple, w) -> None:
    tb.append(target, w)


def bucket_target(block: int) -> tuple:
    return ("bucket", block)


def pool_target(block: int) -> tuple:
    return ("pool", block)


def merge_buffers_into_bucket(buffers, bucket: Bucket) -> int:
    """Move every buffered walk addressed to ``bucket`` into it; returns the count."""
    moved = 0
    for tb in buffers:
        for part in tb.pop(bucket_target(bucket.partner_block)):
            bucket.extend(part)
            moved += len(part)
    return moved


def merge_buffers_into_pools(buffers, pools: WalkPools) -> int:
    moved = 0
    for tb in buffers:
        for target in tb.targets():
            if target[0] != "pool":
                continue
            for part in tb.pop(target):
                pools.associate_with_block(part, target[1])
                moved += len(part)
    return moved
