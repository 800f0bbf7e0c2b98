"""In-memory references: whole-graph walks and exact second-order PageRank.

``memory_walks`` runs the same transition kernels and keyed random numbers as
the engine, but over the entire CSR at once, so in deterministic mode both
must agree byte for byte.  ``reference_walk`` is a plain scalar loop over the
public single-step API, useful to cross-check the batch kernels.
"""
from __future__ import annotations

import numpy as np

from . import transitions as tm
from .engine import Stepper, segments_of
from .sinks import EndpointSink, TrajectorySink
from .tasks import PRNV, PprEstimate, Task, model_of, starts_of, termination_of


class MemoryView:
    def __init__(self, offsets: np.ndarray, neighbors: np.ndarray):
        self.offsets = np.asarray(offsets, dtype=np.int64)
        self.neighbors = np.asarray(neighbors, dtype=np.int64)
        self.degree = np.diff(self.offsets)

    def contains(self, vs):
        return np.ones(len(vs), dtype=bool)

    def resolve(self, vs):
        return self.offsets[vs], self.degree[vs]

    def gather(self, pos):
        return self.neighbors[pos]

    def adjacency(self, v: int) -> np.ndarray:
        return self.neighbors[self.offsets[v]: self.offsets[v + 1]]


def memory_walks(offsets, neighbors, sources, walk_index, model, termination, seed: int = 0,
                 deterministic: bool = True, sink=None, rng=None):
    """Run every walk to completion in memory; fills ``sink`` (a trajectory sink by default)."""
    view = MemoryView(offsets, neighbors)
    sink = sink if sink is not None else TrajectorySink()
    src = np.asarray(sources, dtype=np.int64)
    widx = np.asarray(walk_index, dtype=np.int64)
    st = Stepper(model, termination, seed, deterministic, record=sink.wants_segments)
    if rng is None and not deterministic:
        rng = np.random.default_rng(seed)
    adv = st.advance(view, src, widx, np.full(len(src), -1, dtype=np.int64), src.copy(),
                     np.zeros(len(src), dtype=np.int64), rng, check_start=True, record_start=True)
    segs = segments_of(adv, src, np.full(len(src), -1, dtype=np.int64), np.zeros(len(src), dtype=np.int64))
    if segs is not None:
        sink.segments(*segs)
    sink.finished(src, adv.cur, adv.hop)
    return sink


def oracle_run(offsets, neighbors, task: Task, seed: int = 0, deterministic: bool = True):
    """Execute a task in memory.  Returns sorted walks, or PPR estimates for PRNV."""
    degrees = np.diff(np.asarray(offsets, dtype=np.int64))
    sources, counts = starts_of(task, degrees)
    src = np.repeat(sources, counts)
    ends = np.cumsum(counts)
    widx = np.arange(len(src)) - np.repeat(ends - counts, counts)
    if isinstance(task, PRNV):
        sink = memory_walks(offsets, neighbors, src, widx, model_of(task), termination_of(task),
                            seed, deterministic, sink=EndpointSink())
        vc = sink.visit_counts()
        return [PprEstimate(int(q), vc.get(int(q), {}), sum(vc.get(int(q), {}).values()))
                for q in task.query_nodes]
    sink = memory_walks(offsets, neighbors, src, widx, model_of(task), termination_of(task),
                        seed, deterministic)
    return sink.walks()


def reference_walk(offsets, neighbors, source: int, model, termination, seed: int,
                   walk_index: int = 0) -> list[int]:
    """One walk through the scalar single-step functions."""
    view = MemoryView(offsets, neighbors)
    walk = [source]
    prev, cur, hop = None, source, 0
    while True:
        key = tm.RngKey(seed, source, walk_index, hop)
        if tm.should_terminate(termination, hop, key):
            return walk
        nv = view.adjacency(cur)
        if model is None or prev is None:
            z = tm.deepwalk_next(cur, nv, key)
        else:
            z = tm.node2vec_next(prev, cur, nv, view.adjacency(prev), model, key)
        if z is None:
            return walk
        prev, cur, hop = cur, z, hop + 1
        walk.append(z)


# -- exact second-order PageRank ---------------------------------------------------

def edge_chain(offsets, neighbors, p: float, q: float) -> np.ndarray:
    """Dense transition matrix over directed edges; state e = (u -> neighbors[e])."""
    offsets = np.asarray(offsets, dtype=np.int64)
    neighbors = np.asarray(neighbors, dtype=np.int64)
    m = len(neighbors)
    if m > 20000:
        raise ValueError("edge chain too large for a dense oracle")
    owner = np.repeat(np.arange(len(offsets) - 1), np.diff(offsets))
    adj = np.zeros((len(offsets) - 1,) * 2, dtype=bool)
    adj[owner, neighbors] = True
    P = np.zeros((m, m))
    for e in range(m):
        u, v = owner[e], neighbors[e]
        nxt = np.arange(offsets[v], offsets[v + 1])
        z = neighbors[nxt]
        w = np.where(z == u, 1.0 / p, np.where(adj[u, z], 1.0, 1.0 / q))
        P[e, nxt] = w / w.sum()
    return P


def exact_ppr(offsets, neighbors, query: int, decay: float, max_length: int,
              p: float = 1.0, q: float = 1.0, chain: np.ndarray | None = None) -> np.ndarray:
    """Stopping-vertex distribution of a capped geometric second-order walk from ``query``."""
    offsets = np.asarray(offsets, dtype=np.int64)
    neighbors = np.asarray(neighbors, dtype=np.int64)
    n = len(offsets) - 1
    out = np.zeros(n)
    lo, hi = offsets[query], offsets[query + 1]
    if max_length == 1 or hi == lo:
        out[query] = 1.0
        return out
    P = edge_chain(offsets, neighbors, p, q) if chain is None else chain
    x = np.zeros(len(neighbors))
    x[lo:hi] = 1.0 / (hi - lo)
    for hop in range(1, max_length):
        stop = 1.0 if hop == max_length - 1 else 1.0 - decay
        np.add.at(out, neighbors, stop * x)
        x = decay * (x @ P)
    return out
