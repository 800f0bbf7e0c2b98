"""Bi-block execution engine.

Each time slot drains the pool of a current block ``b``, splits its walks into
buckets keyed by the other block they touch, keeps ``b`` resident and loads
one ancillary block per non-empty bucket.  In triangular mode (skewed pools)
only ancillary blocks above ``b`` are ever needed; the plain-bucket mode keys
pools by current block and scans every ancillary block.

Walks are advanced in lockstep batches: one vectorised sampling step for all
walks still inside the two resident blocks, repeated until every walk has
terminated or left them.
"""
from __future__ import annotations

import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
import tempfile

import numpy as np

from . import transitions as tm
from .graph_store import BlockData, PartitionedGraph
from .loader_model import FULL, ON_DEMAND, LoadSample
from .walk_codec import MAX_OFFSET, decode_batch, encode_batch
from .walk_manager import (
    BY_CURRENT, DEFAULT_FLUSH_THRESHOLD, SKEWED, ThreadBuffer, WalkPools, bucket_target,
    collect_buckets, merge_buffers_into_bucket, merge_buffers_into_pools, pool_target,
)

log = logging.getLogger(__name__)

TRIANGULAR = "triangular"
PLAIN_BUCKET = "plainbucket"
MIN_CHUNK = 512  # smaller chunks cost more in per-step overhead than threads win back
SCHEDULERS = ("iteration", "alphabet", "minheight", "maxsum", "gwmix")
LOADING_MODES = ("full", "ondemand", "learned")

# where a walk goes after leaving the resident blocks
ROUTE_BELOW = "pool_cur_below_b"
ROUTE_BETWEEN_FROM_B = "pool_b"
ROUTE_BETWEEN_FROM_I = "pool_cur_between"
ROUTE_EXTEND = "bucket_extend"
ROUTE_ABOVE_FROM_I = "pool_i"
ROUTE_PLAIN = "pool_cur"
ROUTE_INIT = "init"


@dataclass
class EngineConfig:
    model: tm.Node2vecParams | None = None  # None: DeepWalk
    termination: tm.Termination = field(default_factory=lambda: tm.FixedLength(80))
    scheduler: str = "iteration"
    engine_mode: str = TRIANGULAR
    loading_mode: str = "full"
    threads: int = 1
    seed: int = 0
    deterministic: bool = False
    gw_prob: float = 0.8
    flush_threshold: int = DEFAULT_FLUSH_THRESHOLD

    def __post_init__(self):
        if self.scheduler not in SCHEDULERS:
            raise ValueError(f"unknown scheduler {self.scheduler!r}")
        if self.engine_mode not in (TRIANGULAR, PLAIN_BUCKET):
            raise ValueError(f"unknown engine mode {self.engine_mode!r}")
        if self.loading_mode not in LOADING_MODES:
            raise ValueError(f"unknown loading mode {self.loading_mode!r}")
        if not 0 < self.gw_prob < 1:
            raise ValueError("gwmix probability must be in (0, 1)")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


@dataclass
class Metrics:
    block_io_count: int = 0
    block_io_bytes: int = 0
    ondemand_io_count: int = 0
    ondemand_io_bytes: int = 0
    vertex_io_count: int = 0
    vertex_io_bytes: int = 0
    walk_io_bytes: int = 0
    walk_flush_bytes: int = 0
    steps_sampled: int = 0
    walks_started: int = 0
    walks_finished: int = 0
    init_loads: int = 0
    current_loads: int = 0
    ancillary_loads: int = 0
    time_slots: int = 0
    sweeps: int = 0
    sweep_loads: list = field(default_factory=list)
    sweep_min_hops: list = field(default_factory=list)
    slot_blocks: list = field(default_factory=list)
    routing: dict = field(default_factory=dict)
    io_utilization: list = field(default_factory=list)
    wall_time: float = 0.0
    load_time: float = 0.0
    execute_time: float = 0.0

    @property
    def block_loads(self) -> int:
        """Current plus ancillary loads after initialisation (any loading mode)."""
        return self.current_loads + self.ancillary_loads

    def to_json(self) -> dict:
        d = asdict(self)
        d["block_loads"] = self.block_loads
        return d


# ---------------------------------------------------------------------------
# schedulers

def next_current_block(strategy: str, counts: np.ndarray, min_hops: np.ndarray,
                       last: int | None, candidates: int, rng=None, prob: float = 0.8):
    """Pick the next current block among ``range(candidates)``; ``None`` when done."""
    counts = np.asarray(counts[:candidates])
    if not counts.any():
        return None
    start = 0 if last is None else (last + 1) % candidates
    if strategy == "alphabet":
        return start
    if strategy == "iteration":
        order = np.roll(np.arange(candidates), -start)
        return int(order[np.flatnonzero(counts[order] > 0)[0]])
    if strategy == "gwmix":
        strategy = "maxsum" if rng.random() < prob else "minheight"
    if strategy == "maxsum":
        return int(np.argmax(counts))
    if strategy == "minheight":
        hops = np.where(counts > 0, np.asarray(min_hops[:candidates]), np.iinfo(np.int64).max)
        return int(np.argmin(hops))
    raise ValueError(f"unknown scheduler {strategy!r}")


def route_targets(pb, cb, b: int, i: int | None, law: str = SKEWED, init: bool = False):
    """Destination of walks that left blocks ``b``/``i`` (or the init block).

    Returns ``(target block, goes-to-bucket mask, outcome label)``.  Under the
    skewed law a walk that came from ``b`` and moves above ``i`` joins the
    bucket of its new block, which still executes later in the same slot.
    """
    pb = np.asarray(pb, dtype=np.int64)
    cb = np.asarray(cb, dtype=np.int64)
    n = len(cb)
    if law == BY_CURRENT or init:
        target = cb if law == BY_CURRENT else np.minimum(pb, cb)
        label = ROUTE_INIT if init else ROUTE_PLAIN
        return target, np.zeros(n, dtype=bool), np.full(n, label, dtype=object)
    below = cb < b
    between = (cb > b) & (cb < i)
    above = cb > i
    from_b = pb == b
    if not np.all(below | between | above) or not np.all(from_b | (pb == i)):
        raise RuntimeError("walk left the resident blocks inconsistently")
    target = np.where(below, cb, np.where(between, np.where(from_b, b, cb),
                                          np.where(from_b, cb, i)))
    kind = np.select(
        [below, between & from_b, between & ~from_b, above & from_b, above & ~from_b],
        [ROUTE_BELOW, ROUTE_BETWEEN_FROM_B, ROUTE_BETWEEN_FROM_I, ROUTE_EXTEND, ROUTE_ABOVE_FROM_I],
        default="none")
    return target, above & from_b, kind


# ---------------------------------------------------------------------------
# resident graph views

class BiBlockView:
    """Adjacency over the resident current block and optional ancillary block."""

    def __init__(self, graph: PartitionedGraph, current: BlockData, ancillary: BlockData | None = None):
        self.graph = graph
        self.current = current
        self.ancillary = ancillary
        self._nb = current._len
        self._cs, self._ce = current.start_vertex, current.start_vertex + current.vertex_span
        self._flat = current._buf[: self._nb]
        self._lock = threading.Lock()
        if ancillary is not None:
            self._as = ancillary.start_vertex
            self._ae = ancillary.start_vertex + ancillary.vertex_span
            self._refresh()

    def contains(self, vs: np.ndarray) -> np.ndarray:
        inside = (vs >= self._cs) & (vs < self._ce)
        if self.ancillary is not None:
            inside |= (vs >= self._as) & (vs < self._ae)
        return inside

    def _locate(self, vs):
        if self.ancillary is None:
            return self.current.locate(vs)
        pos = np.empty(len(vs), dtype=np.int64)
        deg = np.empty(len(vs), dtype=np.int64)
        m = (vs >= self._cs) & (vs < self._ce)
        pos[m], deg[m] = self.current.locate(vs[m])
        pa, da = self.ancillary.locate(vs[~m])
        pos[~m] = pa + self._nb
        deg[~m] = da
        return pos, deg

    def resolve(self, vs: np.ndarray):
        pos, deg = self._locate(vs)
        missing = deg < 0
        if missing.any():
            need = np.unique(vs[missing])
            d, nbrs = self.graph.fetch_vertices(need)
            self.ancillary.add_segments(need, d, nbrs)
            pos[missing], deg[missing] = self._locate(vs[missing])
        if self.ancillary is not None and len(pos) and (pos + deg).max() > len(self._flat):
            self._refresh()
        return pos, deg

    def _refresh(self) -> None:
        # one flat buffer over both blocks; old arrays stay valid for other threads
        with self._lock:
            anc = self.ancillary
            with anc._lock:
                tail = anc._buf[: anc._len]
            if len(self._flat) < self._nb + len(tail):
                self._flat = np.concatenate((self.current._buf[: self._nb], tail))

    def gather(self, pos: np.ndarray) -> np.ndarray:
        return self._flat[pos]


# ---------------------------------------------------------------------------
# lockstep walk advancement (shared with the oracle)

@dataclass
class Advance:
    prev: np.ndarray
    cur: np.ndarray
    hop: np.ndarray
    finished: np.ndarray
    exited: np.ndarray
    steps: int
    seg_rows: np.ndarray | None = None
    seg_vertices: np.ndarray | None = None


class Stepper:
    """Runs walks while their current vertex stays inside a view."""

    def __init__(self, model, termination, seed: int, deterministic: bool, record: bool):
        self.model = model
        self.termination = termination
        self.seed = seed
        self.deterministic = deterministic
        self.record = record
        self._draw_stop = tm.termination_needs_draws(termination)

    def _uniforms(self, rng, src, widx, hop, lane):
        if self.deterministic:
            return tm.keyed_uniforms(self.seed, src, widx, hop, lane)
        return rng.random(len(src))

    def _stop(self, rng, src, widx, hop):
        draws = self._uniforms(rng, src, widx, hop, tm.LANE_STOP) if self._draw_stop else None
        return tm.stop_batch(self.termination, hop, draws)

    def advance(self, view, src, widx, prev, cur, hop, rng=None, check_start=False,
                record_start=False) -> Advance:
        n = len(src)
        prev, cur, hop = prev.copy(), cur.copy(), hop.copy()
        finished = np.zeros(n, dtype=bool)
        exited = np.zeros(n, dtype=bool)
        rows_log, z_log = [], []
        if record_start and self.record:
            rows_log.append(np.arange(n))
            z_log.append(cur.copy())
        active = np.arange(n)
        if check_start and n:
            stop = self._stop(rng, src, widx, hop)
            finished[stop] = True
            active = active[~stop]
        steps = 0
        while len(active):
            v = cur[active]
            pos_v, deg_v = view.resolve(v)
            dead = deg_v == 0
            if dead.any():
                finished[active[dead]] = True
                keep = ~dead
                active, v, pos_v, deg_v = active[keep], v[keep], pos_v[keep], deg_v[keep]
                if not len(active):
                    break
            u01 = self._uniforms(rng, src[active], widx[active], hop[active], tm.LANE_STEP)
            u = prev[active]
            if self.model is None:
                z = tm.deepwalk_batch(view.gather, pos_v, deg_v, u01)
            else:
                z = np.empty(len(active), dtype=np.int64)
                first = u < 0
                if first.any():
                    z[first] = tm.deepwalk_batch(view.gather, pos_v[first], deg_v[first], u01[first])
                sec = ~first
                if sec.any():
                    pos_u, deg_u = view.resolve(u[sec])
                    z[sec] = tm.node2vec_batch(view.gather, pos_v[sec], deg_v[sec], u[sec],
                                               pos_u, deg_u, u01[sec], self.model.p, self.model.q)
            prev[active] = v
            cur[active] = z
            hop[active] += 1
            steps += len(active)
            if self.record:
                rows_log.append(active)
                z_log.append(z)
            stop = self._stop(rng, src[active], widx[active], hop[active])
            finished[active[stop]] = True
            active = active[~stop]
            inside = view.contains(cur[active])
            exited[active[~inside]] = True
            active = active[inside]
        out = Advance(prev, cur, hop, finished, exited, steps)
        if self.record and rows_log:
            rows = np.concatenate(rows_log)
            order = np.argsort(rows, kind="stable")
            out.seg_rows = rows[order]
            out.seg_vertices = np.concatenate(z_log)[order]
        return out


def segments_of(adv: Advance, src, anchors, first_hops):
    """Per-walk trajectory pieces recorded by :meth:`Stepper.advance`."""
    if adv.seg_rows is None:
        return None
    lengths = np.bincount(adv.seg_rows, minlength=len(src))
    has = lengths > 0
    return (src[has], anchors[has], first_hops[has], lengths[has], adv.seg_vertices)


class NullSink:
    wants_segments = False

    def segments(self, sources, anchors, first_hops, lengths, vertices):
        pass

    def finished(self, sources, last_vertices, hops):
        pass


# ---------------------------------------------------------------------------

class Engine:
    def __init__(self, graph: PartitionedGraph, cfg: EngineConfig, *, workdir=None, sink=None,
                 loader=None, recorder=None, timing_hook=None, slot_callback=None,
                 clock=time.perf_counter):
        self.graph = graph
        self.cfg = cfg
        self.sink = sink or NullSink()
        self.loader = loader
        self.recorder = recorder
        self.timing_hook = timing_hook
        self.slot_callback = slot_callback
        self.clock = clock
        if cfg.loading_mode == "learned" and loader is None:
            raise ValueError("learned loading needs a fitted loader model")
        spans = np.diff(graph.starts)
        if spans.max() > MAX_OFFSET + 1:
            raise ValueError("a block spans more vertices than the walk encoding allows")
        self._tmp = None
        if workdir is None:
            self._tmp = tempfile.TemporaryDirectory(prefix="grasorw-")
            workdir = self._tmp.name
        self.workdir = Path(workdir)
        self.law = SKEWED if cfg.engine_mode == TRIANGULAR else BY_CURRENT
        self.pools = WalkPools(self.workdir, graph.block_count, self.law, cfg.flush_threshold)
        self.buffers = [ThreadBuffer(k) for k in range(cfg.threads)]
        self.metrics = Metrics()
        self.stepper = Stepper(cfg.model, cfg.termination, cfg.seed, cfg.deterministic,
                               record=getattr(self.sink, "wants_segments", False))
        self._executor = ThreadPoolExecutor(cfg.threads) if cfg.threads > 1 else None
        self._sched_rng = np.random.default_rng([cfg.seed, 0x5C4ED])
        self._slot_no = 0

    # -- public -----------------------------------------------------------------
    def run(self, starts) -> Metrics:
        t0 = time.perf_counter()
        io0 = self.graph.io.snapshot()
        try:
            src, widx = self._expand_starts(starts)
            self.metrics.walks_started = len(src)
            self.initialize_walks(src, widx)
            self._check_conservation()
            self._main_loop()
        finally:
            if self._executor is not None:
                self._executor.shutdown()
        io1 = self.graph.io.snapshot()
        for k in io1:
            setattr(self.metrics, k, io1[k] - io0[k])
        self.metrics.walk_io_bytes = self.pools.walk_io_bytes
        self.metrics.walk_flush_bytes = self.pools.bytes_flushed()
        self.metrics.wall_time = time.perf_counter() - t0
        if len(self.pools):
            raise RuntimeError("engine stopped with walks left in pools")
        return self.metrics

    def _expand_starts(self, starts):
        if isinstance(starts, tuple) and len(starts) == 2 and isinstance(starts[0], np.ndarray):
            sources, counts = starts
        else:
            pairs = list(starts)
            sources = np.array([s for s, _ in pairs], dtype=np.int64)
            counts = np.array([c for _, c in pairs], dtype=np.int64)
        sources = np.asarray(sources, dtype=np.int64)
        counts = np.asarray(counts, dtype=np.int64)
        if len(sources) and (sources.min() < 0 or sources.max() >= self.graph.vertex_count):
            raise IndexError("start vertex out of range")
        if self.cfg.deterministic and len(counts) and (
                counts.max() > 1 or len(np.unique(sources)) != len(sources)):
            raise ValueError("deterministic mode needs exactly one walk per source")
        src = np.repeat(sources, counts)
        ends = np.cumsum(counts)
        widx = np.arange(len(src)) - np.repeat(ends - counts, counts)
        return src, widx

    # -- initialisation -----------------------------------------------------------
    def initialize_walks(self, src: np.ndarray, widx: np.ndarray) -> None:
        if not len(src):
            return
        blocks = self.graph.blocks_of(src)
        for b in np.unique(blocks):
            b = int(b)
            sel = np.flatnonzero(blocks == b)
            t = time.perf_counter()
            blk = self.graph.load_block_full(b)
            self.metrics.load_time += time.perf_counter() - t
            self.metrics.init_loads += 1
            view = BiBlockView(self.graph, blk, None)
            s, w = src[sel], widx[sel]
            neg = np.full(len(sel), -1, dtype=np.int64)
            zero = np.zeros(len(sel), dtype=np.int64)
            self._run_chunks(view, b, None, s, w, neg, s.copy(), zero, init=True,
                             rng_tag=("init", b))
            merge_buffers_into_pools(self.buffers, self.pools)

    # -- main loop ---------------------------------------------------------------
    def _main_loop(self) -> None:
        nb = self.graph.block_count
        candidates = nb - 1 if self.law == SKEWED else nb
        if candidates < 1:
            return
        last = None
        while True:
            b = next_current_block(self.cfg.scheduler, self.pools.counts(), self.pools.min_hops(),
                                   last, candidates, self._sched_rng, self.cfg.gw_prob)
            if b is None:
                break
            if last is None or b <= last:
                self.metrics.sweeps += 1
                self.metrics.sweep_loads.append(0)
                hops = self.pools.min_hops()[self.pools.counts() > 0]
                self.metrics.sweep_min_hops.append(int(hops.min()))
            last = b
            before = self.metrics.block_loads
            self.run_time_slot(b)
            self.metrics.sweep_loads[-1] += self.metrics.block_loads - before
            self._check_conservation()
            if self.slot_callback is not None:
                self.slot_callback(self, b)

    def _check_conservation(self) -> None:
        pending = sum(tb.pending() for tb in self.buffers)
        if self.metrics.walks_finished + len(self.pools) + pending != self.metrics.walks_started:
            raise RuntimeError("walk conservation violated")

    def run_time_slot(self, b: int) -> None:
        nb = self.graph.block_count
        walks = self.pools.load_walks(b)
        buckets = collect_buckets(walks, b, nb)
        t = time.perf_counter()
        cur_blk = self.graph.load_block_full(b)
        self.metrics.load_time += time.perf_counter() - t
        self.metrics.current_loads += 1
        self.metrics.time_slots += 1
        self.metrics.slot_blocks.append(b)
        executed = 0 if len(walks) else None
        order = range(b + 1, nb) if self.law == SKEWED else (i for i in range(nb) if i != b)
        for i in order:
            merge_buffers_into_bucket(self.buffers, buckets[i])
            if not len(buckets[i]):
                continue
            self._execute_bucket(b, i, cur_blk, buckets[i].take())
            executed = (executed or 0) + 1
        if any(t[0] == "bucket" for tb in self.buffers for t in tb.targets()):
            raise RuntimeError("bucket-extended walks left unexecuted")
        merge_buffers_into_pools(self.buffers, self.pools)
        if executed:
            self._slot_no += 1

    def _activated(self, recs: np.ndarray, i: int) -> np.ndarray:
        f = decode_batch(recs)
        s = int(self.graph.starts[i])
        verts = [s + f.cur_offset[f.cur_block == i]]
        if self.cfg.model is not None:
            verts.append(s + f.pre_offset[f.pre_block == i])
        return np.unique(np.concatenate(verts))

    def _choose_mode(self, i: int, n: int) -> str:
        lm = self.cfg.loading_mode
        if lm == "full":
            return FULL
        if lm == "ondemand":
            return ON_DEMAND
        return self.loader.choose_mode(i, n, self.graph.block_span(i))

    def _execute_bucket(self, b: int, i: int, cur_blk: BlockData, recs: np.ndarray) -> None:
        n = len(recs)
        span = self.graph.block_span(i)
        mode = self._choose_mode(i, n)
        t0 = self.clock()
        if mode == ON_DEMAND:
            anc = self.graph.load_block_on_demand(i, self._activated(recs, i))
        else:
            anc = self.graph.load_block_full(i)
        t1 = self.clock()
        self.metrics.load_time += t1 - t0
        self.metrics.ancillary_loads += 1
        f = decode_batch(recs)
        starts = self.graph.starts
        src = f.source
        prev = starts[f.pre_block] + f.pre_offset
        cur = starts[f.cur_block] + f.cur_offset
        widx = np.zeros(n, dtype=np.int64)
        view = BiBlockView(self.graph, cur_blk, anc)
        self._run_chunks(view, b, i, src, widx, prev, cur, f.hop, init=False,
                         rng_tag=(self._slot_no, b, i))
        t2 = self.clock()
        self.metrics.execute_time += t2 - t1
        elapsed = t2 - t0
        if self.timing_hook is not None:
            elapsed = self.timing_hook(i, mode, n / span, elapsed)
        if self.recorder is not None:
            self.recorder.record(LoadSample(i, n / span, mode, max(elapsed, 0.0)))
        self.metrics.io_utilization.append({
            "slot": self.metrics.time_slots - 1, "current": b, "block": i, "mode": mode,
            "walks": n, "loaded_bytes": anc.loaded_bytes, "touched_bytes": anc.touched_bytes,
            "utilization": anc.io_utilization})

    # -- chunked execution ----------------------------------------------------------
    def _run_chunks(self, view, b, i, src, widx, prev, cur, hop, init, rng_tag):
        n = len(src)
        k = max(1, min(self.cfg.threads, n // MIN_CHUNK))
        parts = np.array_split(np.arange(n), k) if k > 1 else [np.arange(n)]
        jobs = [(view, b, i, src[p], widx[p], prev[p], cur[p], hop[p], init,
                 self.buffers[j], None if self.cfg.deterministic else
                 np.random.default_rng([self.cfg.seed, *map(_tag, rng_tag), j]))
                for j, p in enumerate(parts)]
        if self._executor is None or len(jobs) == 1:
            results = [self._process_chunk(*job) for job in jobs]
        else:
            results = list(self._executor.map(lambda job: self._process_chunk(*job), jobs))
        for res in results:
            self._absorb(res)

    def _process_chunk(self, view, b, i, src, widx, prev, cur, hop, init, buf, rng):
        adv = self.stepper.advance(view, src, widx, prev, cur, hop, rng,
                                   check_start=init, record_start=init)
        segs = None
        if adv.seg_rows is not None:
            anchors = np.full(len(src), -1, dtype=np.int64) if init else cur
            first_hops = hop if init else hop + 1
            segs = segments_of(adv, src, anchors, first_hops)
        fin = adv.finished
        finished = (src[fin], adv.cur[fin], adv.hop[fin])
        ex = np.flatnonzero(adv.exited)
        routes = self._route(ex, adv, src, b, i, buf, init)
        return adv.steps, segs, finished, routes

    def _route(self, ex, adv, src, b, i, buf, init):
        if not len(ex):
            return {}
        g = self.graph
        pv, cv = adv.prev[ex], adv.cur[ex]
        pb, cb = g.blocks_of(pv), g.blocks_of(cv)
        recs = encode_batch(src[ex], pv - g.starts[pb], cv - g.starts[cb], pb, cb, adv.hop[ex])
        target, bucket, kind = route_targets(pb, cb, b, i, self.law, init)
        for t in np.unique(target[bucket]):
            buf.append(bucket_target(int(t)), recs[bucket & (target == t)])
        pool = ~bucket
        for t in np.unique(target[pool]):
            buf.append(pool_target(int(t)), recs[pool & (target == t)])
        names, counts = np.unique(kind, return_counts=True)
        return dict(zip(names.tolist(), counts.tolist()))

    def _absorb(self, res) -> None:
        steps, segs, finished, routes = res
        self.metrics.steps_sampled += steps
        if segs is not None:
            self.sink.segments(*segs)
        if len(finished[0]):
            self.metrics.walks_finished += len(finished[0])
            self.sink.finished(*finished)
        for k, v in routes.items():
            self.metrics.routing[k] = self.metrics.routing.get(k, 0) + v


def _tag(x) -> int:
    if isinstance(x, str):
        return sum(ord(c) << (8 * n) for n, c in enumerate(x)) & 0xFFFFFFFF
    return int(x)


def run(graph: PartitionedGraph, starts, cfg: EngineConfig, **kwargs) -> Metrics:
    return Engine(graph, cfg, **kwargs).run(starts)
