"""DeepWalk and Node2vec transitions, termination rules and the keyed RNG.

Node2vec weights only take three values (1/p, 1, 1/q), so the sampler works on
integer prefix counts of the three weight classes.  The cumulative weight at a
position is ``c0/p + c1 + c2/q`` evaluated per element, which keeps the scalar
and batch samplers bit-identical whatever the batch composition is.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_M64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

LANE_STEP = 1
LANE_STOP = 2


@dataclass(frozen=True)
class Node2vecParams:
    p: float = 1.0
    q: float = 1.0

    def __post_init__(self):
        if not (self.p > 0 and self.q > 0):
            raise ValueError("Node2vec p and q must be positive")


@dataclass(frozen=True)
class FixedLength:
    length: int

    def __post_init__(self):
        if not 1 <= self.length <= 1024:
            raise ValueError("walk length must be in [1, 1024]")


@dataclass(frozen=True)
class GeometricCapped:
    """Continue with ``continue_prob`` after every step, at most ``max_length`` vertices.

    The first step is always taken: the walk starts on an edge out of its source.
    """

    continue_prob: float
    max_length: int

    def __post_init__(self):
        if not 0 <= self.continue_prob < 1:
            raise ValueError("continue_prob must be in [0, 1)")
        if not 1 <= self.max_length <= 1024:
            raise ValueError("max_length must be in [1, 1024]")


Termination = FixedLength | GeometricCapped


@dataclass(frozen=True)
class RngKey:
    seed: int
    source: int
    walk_index: int
    hop: int


# -- counter based RNG ------------------------------------------------------

def _mix(x: int) -> int:
    x &= _M64
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & _M64
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & _M64
    return x ^ (x >> 31)


def key_uniform(key: RngKey, lane: int = LANE_STEP) -> float:
    h = _mix(key.seed + lane * _GOLDEN)
    for part in (key.source, key.walk_index, key.hop):
        h = (_mix(h ^ (part & _M64)) + _GOLDEN) & _M64
    return (h >> 11) * 2.0 ** -53


def _mix_arr(x: np.ndarray) -> np.ndarray:
    x = x ^ (x >> np.uint64(30))
    x = x * np.uint64(0xBF58476D1CE4E5B9)
    x = x ^ (x >> np.uint64(27))
    x = x * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


def keyed_uniforms(seed: int, source, walk_index, hop, lane: int = LANE_STEP) -> np.ndarray:
    """Vectorised :func:`key_uniform`; same bits for the same key."""
    source = np.asarray(source, dtype=np.int64)
    n = source.shape[0]
    h0 = _mix((seed + lane * _GOLDEN) & _M64)
    h = np.full(n, h0, dtype=np.uint64)
    g = np.uint64(_GOLDEN)
    for part in (source, walk_index, hop):
        part = np.broadcast_to(np.asarray(part, dtype=np.int64), (n,)).astype(np.uint64)
        h = _mix_arr(h ^ part) + g
    return (h >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


# -- scalar API ---------------------------------------------------------------

def hop_distance(u: int, z: int, u_neighbors) -> int:
    """0 if z is u, 1 if z is adjacent to u, otherwise 2 (z is a neighbour of v)."""
    if z == u:
        return 0
    nb = np.asarray(u_neighbors)
    i = int(np.searchsorted(nb, z))
    return 1 if i < len(nb) and nb[i] == z else 2


def _classes(u: int, v_neighbors, u_neighbors) -> np.ndarray:
    return np.array([hop_distance(u, int(z), u_neighbors) for z in v_neighbors], dtype=np.int64)


def node2vec_weights(u: int, v_neighbors, u_neighbors, params: Node2vecParams) -> np.ndarray:
    lookup = np.array([1.0 / params.p, 1.0, 1.0 / params.q])
    return lookup[_classes(u, v_neighbors, u_neighbors)]


def _pick(cls: np.ndarray, u01: float, p: float, q: float) -> int:
    c0 = np.cumsum(cls == 0).astype(np.float64)
    c1 = np.cumsum(cls == 1).astype(np.float64)
    c2 = np.cumsum(cls == 2).astype(np.float64)
    cum = c0 / p + c1 + c2 / q
    r = u01 * cum[-1]
    hit = np.flatnonzero(cum > r)
    return int(hit[0]) if len(hit) else len(cls) - 1


def node2vec_next(u: int, v: int, v_neighbors, u_neighbors, params: Node2vecParams,
                  key: RngKey) -> int | None:
    """Next vertex of a walk at ``v`` coming from ``u``; ``None`` at a dead end."""
    v_neighbors = np.asarray(v_neighbors)
    if len(v_neighbors) == 0:
        return None
    cls = _classes(u, v_neighbors, u_neighbors)
    return int(v_neighbors[_pick(cls, key_uniform(key), params.p, params.q)])


def deepwalk_next(v: int, v_neighbors, key: RngKey) -> int | None:
    v_neighbors = np.asarray(v_neighbors)
    d = len(v_neighbors)
    if d == 0:
        return None
    return int(v_neighbors[min(int(key_uniform(key) * d), d - 1)])


def should_terminate(t: Termination, hop: int, key: RngKey | None = None,
                     u01: float | None = None) -> bool:
    if isinstance(t, FixedLength):
        return hop >= t.length - 1
    if hop >= t.max_length - 1:
        return True
    if hop == 0:
        return False
    if u01 is None:
        u01 = key_uniform(key, LANE_STOP)
    return u01 >= t.continue_prob


# -- batch kernels ------------------------------------------------------------

def deepwalk_batch(gather, pos_v, deg_v, u01) -> np.ndarray:
    idx = np.minimum((u01 * deg_v).astype(np.int64), deg_v - 1)
    return gather(pos_v + idx)


def _member(gather, pos_u, deg_u, rows, z) -> np.ndarray:
    """Is ``z[k]`` adjacent to the previous vertex of walk ``rows[k]``?

    Adjacency of walk ``r``'s previous vertex is the sorted segment
    ``[pos_u[r], pos_u[r] + deg_u[r])``.
    """
    found = np.zeros(len(z), dtype=bool)
    total = int(deg_u.sum())
    if not total or not len(z):
        return found
    n = len(pos_u)
    owner = np.repeat(np.arange(n), deg_u)
    seg = np.cumsum(deg_u) - deg_u
    nb = gather(pos_u[owner] + np.arange(total) - seg[owner])
    # rows ascend and each row is sorted, so (row, vertex) keys are globally sorted
    width = int(max(nb.max(), z.max())) + 1
    if n * width >= 1 << 62:
        raise OverflowError("batch too large for packed membership keys")
    keys = owner * width + nb
    probe = rows * width + z
    i = np.minimum(np.searchsorted(keys, probe), total - 1)
    return keys[i] == probe


def node2vec_batch(gather, pos_v, deg_v, prev, pos_u, deg_u, u01, p: float, q: float) -> np.ndarray:
    """Second-order step for walks at v (positions/degrees) coming from ``prev``."""
    n = len(pos_v)
    seg = np.cumsum(deg_v) - deg_v
    total = int(deg_v.sum())
    owner = np.repeat(np.arange(n), deg_v)
    j = np.arange(total) - seg[owner]
    z = gather(pos_v[owner] + j)
    cls = np.full(total, 2, dtype=np.int64)
    cls[z == prev[owner]] = 0
    rest = np.flatnonzero(cls != 0)
    hit = _member(gather, pos_u, deg_u, owner[rest], z[rest])
    cls[rest[hit]] = 1
    counts = []
    for c in (0, 1, 2):
        cs = np.cumsum(cls == c)
        before = cs[seg] - (cls[seg] == c)
        counts.append((cs - before[owner]).astype(np.float64))
    cum = counts[0] / p + counts[1] + counts[2] / q
    last = seg + deg_v - 1
    r = u01 * cum[last]
    cand = np.where(cum > r[owner], j, total + 1)
    first = np.minimum.reduceat(cand, seg) if n else np.zeros(0, dtype=np.int64)
    first = np.minimum(first, deg_v - 1)
    return gather(pos_v + first)


def stop_batch(t: Termination, hop: np.ndarray, u01_stop: np.ndarray | None) -> np.ndarray:
    if isinstance(t, FixedLength):
        return hop >= t.length - 1
    stop = hop >= t.max_length - 1
    draw = (hop > 0) & ~stop
    stop[draw] = u01_stop[draw] >= t.continue_prob
    return stop


def termination_needs_draws(t: Termination) -> bool:
    return isinstance(t, GeometricCapped)


def max_hops(t: Termination) -> int:
    return t.length - 1 if isinstance(t, FixedLength) else t.max_length - 1
