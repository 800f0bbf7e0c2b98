"""Seeded synthetic graphs used as test and benchmark fixtures."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class ErdosRenyi:
    n: int
    avg_degree: float


@dataclass(frozen=True)
class Star:
    leaves: int


@dataclass(frozen=True)
class TwoCommunity:
    n: int
    p_in: float
    p_out: float


def _unique_pairs(u, v, n):
    lo, hi = np.minimum(u, v), np.maximum(u, v)
    keep = lo != hi
    key = np.unique(lo[keep] * n + hi[keep])
    return key // n, key % n


def erdos_renyi(n: int, avg_degree: float, seed: int = 0):
    """G(n, m) style sample with m = n * avg_degree / 2 distinct undirected edges."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    target = min(int(round(n * avg_degree / 2)), n * (n - 1) // 2)
    src = np.zeros(0, dtype=np.int64)
    dst = np.zeros(0, dtype=np.int64)
    while len(src) < target:
        k = int((target - len(src)) * 1.1) + 16
        u = rng.integers(0, n, k)
        v = rng.integers(0, n, k)
        src, dst = _unique_pairs(np.concatenate((src, u)), np.concatenate((dst, v)), n)
    if len(src) > target:
        pick = np.sort(rng.choice(len(src), target, replace=False))
        src, dst = src[pick], dst[pick]
    return src, dst


def star(leaves: int, seed: int = 0):
    if leaves < 0:
        raise ValueError("leaves must be >= 0")
    return np.zeros(leaves, dtype=np.int64), np.arange(1, leaves + 1, dtype=np.int64)


def two_community(n: int, p_in: float, p_out: float, seed: int = 0):
    """Two halves with edge probability ``p_in`` inside and ``p_out`` across."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, 1)
    same = (iu < n // 2) == (ju < n // 2)
    keep = rng.random(len(iu)) < np.where(same, p_in, p_out)
    return iu[keep].astype(np.int64), ju[keep].astype(np.int64)


def generate(kind, seed: int = 0):
    if isinstance(kind, ErdosRenyi):
        return erdos_renyi(kind.n, kind.avg_degree, seed)
    if isinstance(kind, Star):
        return star(kind.leaves, seed)
    if isinstance(kind, TwoCommunity):
        return two_community(kind.n, kind.p_in, kind.p_out, seed)
    raise TypeError(f"unknown graph kind {kind!r}")


def write_edge_list(path, src, dst) -> None:
    with open(Path(path), "w") as fh:
        np.savetxt(fh, np.column_stack((src, dst)), fmt="%d")


def gen_synthetic(kind, path, seed: int = 0) -> int:
    src, dst = generate(kind, seed)
    write_edge_list(path, src, dst)
    return len(src)
