"""Block-partitioned CSR graph store.

A store directory holds::

    meta.bin          magic, version, |V|, |E| (directed entries), N_B, id width,
                      block size, offset width
    start_vertex.bin  (N_B + 1) x u64, first vertex of every block plus |V|
    index.bin         (|V| + 1) CSR offsets in neighbour units
    csr.bin           neighbour ids, sorted ascending per vertex
    vertex_remap.bin  new id -> original id (custom partitions only)

Graphs are symmetrised on import; self loops and duplicate edges are removed.
"""
from __future__ import annotations

import logging
import os
import struct
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

MAGIC = b"GSRW"
VERSION = 1
MAX_BLOCKS = 1024
MAX_VERTICES = 1 << 42
_META = struct.Struct("<4sIQQIBQ")
_META_TAIL = struct.Struct("<B")

FULL = "full"
PARTIAL = "partial"


class GraphFormatError(ValueError):
    pass


class EdgeListError(ValueError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class GraphMeta:
    vertex_count: int
    edge_count: int
    block_count: int
    id_width: int = 4
    block_size: int = 0
    offset_width: int = 8

    def __post_init__(self):
        if self.id_width not in (4, 8) or self.offset_width not in (4, 8):
            raise GraphFormatError("id and offset widths must be 4 or 8 bytes")
        if not 1 <= self.block_count <= MAX_BLOCKS:
            raise GraphFormatError(f"block_count {self.block_count} outside [1, {MAX_BLOCKS}]")
        if self.vertex_count >= 1 << (8 * self.id_width):
            raise GraphFormatError(
                f"{self.vertex_count} vertices do not fit {self.id_width}-byte ids")

    def pack(self) -> bytes:
        return _META.pack(MAGIC, VERSION, self.vertex_count, self.edge_count,
                          self.block_count, self.id_width, self.block_size) + \
            _META_TAIL.pack(self.offset_width)

    @classmethod
    def unpack(cls, data: bytes) -> "GraphMeta":
        if len(data) < _META.size:
            raise GraphFormatError("truncated meta.bin")
        magic, version, nv, ne, nb, idw, bsz = _META.unpack_from(data)
        if magic != MAGIC or version != VERSION:
            raise GraphFormatError("not a graph store (bad magic/version)")
        offw = data[_META.size] if len(data) > _META.size else 8
        return cls(nv, ne, nb, idw, bsz, offw)


@dataclass(frozen=True)
class AdjacencySlice:
    vertex: int
    neighbors: np.ndarray

    @property
    def degree(self) -> int:
        return len(self.neighbors)


class BlockData:
    """An in-memory block image.

    Full blocks keep the block's offset slice and neighbour slice.  Partial
    blocks keep only the segments of vertices that were asked for and can grow
    while a bucket executes (newly reached vertices are fetched and cached).
    Adjacency is addressed through *positions* into one flat buffer so the
    vectorised samplers can gather neighbours without Python loops.
    """

    def __init__(self, block_id, mode, start_vertex, vertex_span, id_width, offset_width):
        self.block_id = block_id
        self.mode = mode
        self.start_vertex = start_vertex
        self.vertex_span = vertex_span
        self.id_width = id_width
        self.offset_width = offset_width
        self.loaded_bytes = 0
        self._touched = np.zeros(vertex_span, dtype=bool)
        self._pos = np.full(vertex_span, -1, dtype=np.int64)
        self._deg = np.full(vertex_span, -1, dtype=np.int64)
        self._buf = np.empty(0, dtype=np.int64)
        self._len = 0
        self._lock = threading.Lock()

    @classmethod
    def full(cls, block_id, start_vertex, offsets, neighbors, id_width, offset_width):
        span = len(offsets) - 1
        blk = cls(block_id, FULL, start_vertex, span, id_width, offset_width)
        base = offsets[:-1] - offsets[0]
        blk._pos = base.astype(np.int64)
        blk._deg = np.diff(offsets).astype(np.int64)
        blk._buf = neighbors.astype(np.int64, copy=False)
        blk._len = len(neighbors)
        blk.loaded_bytes = span * offset_width + len(neighbors) * id_width
        return blk

    @classmethod
    def partial(cls, block_id, start_vertex, vertex_span, id_width, offset_width):
        return cls(block_id, PARTIAL, start_vertex, vertex_span, id_width, offset_width)

    # -- growth (partial mode) --------------------------------------------
    def add_segments(self, vertices: np.ndarray, degrees: np.ndarray, neighbors: np.ndarray) -> None:
        """Cache adjacency of ``vertices``; already-present vertices are ignored."""
        with self._lock:
            local = vertices - self.start_vertex
            fresh = self._deg[local] < 0
            if not fresh.any():
                return
            if not fresh.all():
                neighbors = neighbors[np.repeat(fresh, degrees)]
                local, degrees = local[fresh], degrees[fresh]
            need = self._len + len(neighbors)
            if need > len(self._buf):
                grown = np.empty(max(need, 2 * len(self._buf), 64), dtype=np.int64)
                grown[: self._len] = self._buf[: self._len]
                self._buf = grown
            self._buf[self._len: need] = neighbors
            pos = self._len + np.concatenate(([0], np.cumsum(degrees)[:-1])).astype(np.int64)
            self._len = need
            # publish positions only after the data is in place
            self._pos[local] = pos
            self._deg[local] = degrees
            self.loaded_bytes += len(local) * self.offset_width + len(neighbors) * self.id_width

    # -- lookup -------------------------------------------------------------
    def contains(self, v: int) -> bool:
        return self.start_vertex <= v < self.start_vertex + self.vertex_span

    def locate(self, vertices: np.ndarray, touch: bool = True):
        """Buffer positions and degrees; degree -1 marks a vertex not resident."""
        local = vertices - self.start_vertex
        deg = self._deg[local]
        if touch:
            self._touched[local[deg >= 0]] = True
        return self._pos[local], deg

    def gather(self, positions: np.ndarray) -> np.ndarray:
        return self._buf[positions]

    def adjacency(self, v: int) -> AdjacencySlice:
        if not self.contains(v):
            raise KeyError(f"vertex {v} is not in block {self.block_id}")
        local = v - self.start_vertex
        d = int(self._deg[local])
        if d < 0:
            raise KeyError(f"vertex {v} is not resident in partial block {self.block_id}")
        self._touched[local] = True
        p = int(self._pos[local])
        return AdjacencySlice(v, self._buf[p: p + d].copy())

    def resident_vertices(self) -> np.ndarray:
        return np.flatnonzero(self._deg >= 0) + self.start_vertex

    @property
    def touched_bytes(self) -> int:
        deg = self._deg[self._touched]
        return int(len(deg) * self.offset_width + deg.sum() * self.id_width)

    @property
    def io_utilization(self) -> float:
        if self.loaded_bytes == 0:
            return 1.0
        return self.touched_bytes / self.loaded_bytes


class IOCounters:
    FIELDS = ("block_io_count", "block_io_bytes", "ondemand_io_count", "ondemand_io_bytes",
              "vertex_io_count", "vertex_io_bytes")

    def __init__(self):
        self._lock = threading.Lock()
        for f in self.FIELDS:
            setattr(self, f, 0)

    def add(self, **kw):
        with self._lock:
            for k, v in kw.items():
                setattr(self, k, getattr(self, k) + int(v))

    def snapshot(self) -> dict:
        with self._lock:
            return {f: getattr(self, f) for f in self.FIELDS}


class PartitionedGraph:
    """Read side of a store directory."""

    def __init__(self, path):
        self.path = Path(path)
        self.meta = GraphMeta.unpack((self.path / "meta.bin").read_bytes())
        m = self.meta
        self.starts = np.fromfile(self.path / "start_vertex.bin", dtype="<u8").astype(np.int64)
        if len(self.starts) != m.block_count + 1:
            raise GraphFormatError("start_vertex.bin length does not match block count")
        off_dtype = "<u4" if m.offset_width == 4 else "<u8"
        id_dtype = "<u4" if m.id_width == 4 else "<u8"
        self._index = self._map("index.bin", off_dtype, m.vertex_count + 1)
        self._csr = self._map("csr.bin", id_dtype, m.edge_count)
        self.io = IOCounters()
        remap = self.path / "vertex_remap.bin"
        self.remap = np.fromfile(remap, dtype="<u8").astype(np.int64) if remap.exists() else None

    def _map(self, name, dtype, count):
        p = self.path / name
        expected = count * np.dtype(dtype).itemsize
        size = p.stat().st_size
        if size != expected:
            raise GraphFormatError(f"{name}: expected {expected} bytes, found {size}")
        if count == 0:
            return np.zeros(0, dtype=dtype)
        return np.memmap(p, dtype=dtype, mode="r", shape=(count,))

    # -- basic properties ---------------------------------------------------
    @property
    def vertex_count(self) -> int:
        return self.meta.vertex_count

    @property
    def block_count(self) -> int:
        return self.meta.block_count

    def block_span(self, b: int) -> int:
        return int(self.starts[b + 1] - self.starts[b])

    def block_of(self, v: int) -> int:
        if not 0 <= v < self.vertex_count:
            raise IndexError(f"vertex {v} out of range [0, {self.vertex_count})")
        return int(np.searchsorted(self.starts, v, side="right")) - 1

    def blocks_of(self, vertices: np.ndarray) -> np.ndarray:
        return np.searchsorted(self.starts, vertices, side="right") - 1

    def _check_block(self, b: int):
        if not 0 <= b < self.block_count:
            raise IndexError(f"block {b} out of range [0, {self.block_count})")

    def segment_bytes(self, degrees) -> np.ndarray:
        return self.meta.offset_width + np.asarray(degrees, dtype=np.int64) * self.meta.id_width

    # -- loading ------------------------------------------------------------
    def load_block_full(self, b: int) -> BlockData:
        self._check_block(b)
        s, e = int(self.starts[b]), int(self.starts[b + 1])
        offsets = np.array(self._index[s: e + 1], dtype=np.int64)
        neighbors = np.array(self._csr[offsets[0]: offsets[-1]], dtype=np.int64)
        blk = BlockData.full(b, s, offsets, neighbors, self.meta.id_width, self.meta.offset_width)
        self.io.add(block_io_count=1, block_io_bytes=blk.loaded_bytes)
        return blk

    def _read_segments(self, vertices: np.ndarray):
        lo = np.asarray(self._index[vertices], dtype=np.int64)
        hi = np.asarray(self._index[vertices + 1], dtype=np.int64)
        deg = hi - lo
        total = int(deg.sum())
        if total:
            rel = np.arange(total) - np.repeat(np.cumsum(deg) - deg, deg)
            neighbors = np.asarray(self._csr[np.repeat(lo, deg) + rel], dtype=np.int64)
        else:
            neighbors = np.zeros(0, dtype=np.int64)
        return deg, neighbors

    def load_block_on_demand(self, b: int, activated) -> BlockData:
        self._check_block(b)
        s, e = int(self.starts[b]), int(self.starts[b + 1])
        act = np.unique(np.asarray(list(activated) if isinstance(activated, (set, frozenset))
                                   else activated, dtype=np.int64))
        if len(act) and (act[0] < s or act[-1] >= e):
            raise ValueError(f"activated vertices outside block {b} [{s}, {e})")
        blk = BlockData.partial(b, s, e - s, self.meta.id_width, self.meta.offset_width)
        if len(act):
            deg, nbrs = self._read_segments(act)
            blk.add_segments(act, deg, nbrs)
        self.io.add(ondemand_io_count=1, ondemand_io_bytes=blk.loaded_bytes)
        return blk

    def fetch_vertex(self, v: int) -> AdjacencySlice:
        if not 0 <= v < self.vertex_count:
            raise IndexError(f"vertex {v} out of range [0, {self.vertex_count})")
        lo, hi = int(self._index[v]), int(self._index[v + 1])
        nbrs = np.array(self._csr[lo:hi], dtype=np.int64)
        self.io.add(vertex_io_count=1,
                    vertex_io_bytes=self.meta.offset_width + len(nbrs) * self.meta.id_width)
        return AdjacencySlice(v, nbrs)

    def fetch_vertices(self, vertices: np.ndarray):
        """Batch of single-vertex reads; counts one vertex I/O per vertex."""
        deg, nbrs = self._read_segments(vertices)
        self.io.add(vertex_io_count=len(vertices),
                    vertex_io_bytes=int(self.segment_bytes(deg).sum()))
        return deg, nbrs

    def read_all(self):
        """Whole CSR as arrays (offsets, neighbours); used by the in-memory oracle."""
        return np.array(self._index, dtype=np.int64), np.array(self._csr, dtype=np.int64)

    def degrees(self) -> np.ndarray:
        return np.diff(np.asarray(self._index, dtype=np.int64))


# ---------------------------------------------------------------------------
# building stores

def read_edge_list(path) -> tuple[np.ndarray, np.ndarray]:
    """Parse a whitespace separated ``src dst`` file; '#' lines are comments."""
    try:
        data = np.loadtxt(path, dtype=np.int64, comments="#", ndmin=2)
        if data.size == 0:
            data = data.reshape(0, 2)
        if data.shape[1] != 2:
            raise ValueError("wrong column count")
    except ValueError:
        return _read_edge_list_slow(path)
    if data.size and data.min() < 0:
        return _read_edge_list_slow(path)
    return data[:, 0].copy(), data[:, 1].copy()


def _read_edge_list_slow(path):
    src, dst = [], []
    with open(path, encoding="utf-8") as fh:
        for no, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.split()
            if len(parts) != 2:
                raise EdgeListError(no, f"expected 'src dst', got {s!r}")
            try:
                a, b = int(parts[0]), int(parts[1])
            except ValueError:
                raise EdgeListError(no, f"non-integer vertex id in {s!r}") from None
            if a < 0 or b < 0:
                raise EdgeListError(no, "vertex ids must be nonnegative")
            src.append(a)
            dst.append(b)
    return np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64)


def symmetrize(src: np.ndarray, dst: np.ndarray):
    """Both directions, no self loops, no duplicates; sorted by (src, dst)."""
    keep = src != dst
    s = np.concatenate((src[keep], dst[keep]))
    d = np.concatenate((dst[keep], src[keep]))
    order = np.lexsort((d, s))
    s, d = s[order], d[order]
    if len(s):
        fresh = np.ones(len(s), dtype=bool)
        fresh[1:] = (s[1:] != s[:-1]) | (d[1:] != d[:-1])
        s, d = s[fresh], d[fresh]
    return s, d


def sequential_boundaries(degrees: np.ndarray, block_size: int, id_width: int,
                          offset_width: int) -> np.ndarray:
    """Maximal ID-contiguous ranges whose CSR bytes fit ``block_size``."""
    nbytes = offset_width + degrees.astype(np.int64) * id_width
    cum = np.cumsum(nbytes)
    n = len(degrees)
    bounds = [0]
    s = 0
    while s < n:
        base = int(cum[s - 1]) if s else 0
        e = int(np.searchsorted(cum, base + block_size, side="right"))
        if e <= s:
            e = s + 1  # vertex larger than a block: it gets a block of its own
        bounds.append(e)
        s = e
        if len(bounds) - 1 > MAX_BLOCKS:
            raise GraphFormatError(
                f"block size {block_size} yields more than {MAX_BLOCKS} blocks")
    return np.array(bounds, dtype=np.int64)


def write_store(out_dir, vertex_count: int, src: np.ndarray, dst: np.ndarray,
                starts: np.ndarray, block_size: int, id_width: int = 4,
                offset_width: int = 8, remap: np.ndarray | None = None) -> PartitionedGraph:
    """Write a store from symmetrised, (src, dst)-sorted edge arrays."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = GraphMeta(vertex_count, len(dst), len(starts) - 1, id_width, block_size, offset_width)
    offsets = np.zeros(vertex_count + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=vertex_count), out=offsets[1:])
    off_dtype = "<u4" if offset_width == 4 else "<u8"
    if offset_width == 4 and len(dst) >= 1 << 32:
        raise GraphFormatError("too many edges for 4-byte offsets")
    (out / "meta.bin").write_bytes(meta.pack())
    starts.astype("<u8").tofile(out / "start_vertex.bin")
    offsets.astype(off_dtype).tofile(out / "index.bin")
    dst.astype("<u4" if id_width == 4 else "<u8").tofile(out / "csr.bin")
    stale = out / "vertex_remap.bin"
    if remap is not None:
        remap.astype("<u8").tofile(stale)
    elif stale.exists():
        stale.unlink()
    log.info("wrote store %s: |V|=%d entries=%d blocks=%d", out, vertex_count, len(dst),
             meta.block_count)
    return PartitionedGraph(out)


def _vertex_count(src, dst, at_least=0) -> int:
    n = max(int(src.max()) + 1 if len(src) else 0, int(dst.max()) + 1 if len(dst) else 0, at_least)
    if n > MAX_VERTICES:
        raise GraphFormatError(f"vertex id {n - 1} does not fit the 42-bit walk encoding")
    return n


def build_sequential(src, dst, out_dir, block_size: int, id_width: int = 4,
                     offset_width: int = 8, vertex_count: int | None = None) -> PartitionedGraph:
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    n = _vertex_count(src, dst, vertex_count or 0)
    if n == 0:
        raise GraphFormatError("graph has no vertices")
    s, d = symmetrize(src, dst)
    deg = np.bincount(s, minlength=n)
    starts = sequential_boundaries(deg, block_size, id_width, offset_width)
    return write_store(out_dir, n, s, d, starts, block_size, id_width, offset_width)


def partition_sequential(edge_list_path, out_dir, block_size: int, id_width: int = 4,
                         offset_width: int = 8) -> PartitionedGraph:
    src, dst = read_edge_list(edge_list_path)
    return build_sequential(src, dst, out_dir, block_size, id_width, offset_width)


def read_block_file(path) -> dict[int, int] | np.ndarray:
    """Either ``vertex block`` pairs or one block id per line (METIS part file)."""
    pairs, single = [], []
    with open(path, encoding="utf-8") as fh:
        for no, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.split()
            try:
                vals = [int(x) for x in parts]
            except ValueError:
                raise EdgeListError(no, f"non-integer entry {s!r}") from None
            if len(vals) == 1:
                single.append(vals[0])
            elif len(vals) == 2:
                pairs.append(vals)
            else:
                raise EdgeListError(no, f"expected 'block' or 'vertex block', got {s!r}")
    if pairs and single:
        raise ValueError("block file mixes one- and two-column lines")
    if single:
        return np.array(single, dtype=np.int64)
    return {v: b for v, b in pairs}


def import_partition(edge_list_path, block_assignment_path, out_dir, id_width: int = 4,
                     offset_width: int = 8) -> PartitionedGraph:
    src, dst = read_edge_list(edge_list_path)
    assignment = read_block_file(block_assignment_path)
    return build_custom(src, dst, assignment, out_dir, id_width, offset_width)


def build_custom(src, dst, assignment, out_dir, id_width: int = 4,
                 offset_width: int = 8) -> PartitionedGraph:
    """Renumber vertices so every block is an ID-contiguous range and write the store."""
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    if isinstance(assignment, dict):
        n = _vertex_count(src, dst, max(assignment, default=-1) + 1)
        blocks = np.full(n, -1, dtype=np.int64)
        for v, b in assignment.items():
            blocks[v] = b
    else:
        blocks = np.asarray(assignment, dtype=np.int64)
        n = _vertex_count(src, dst, len(blocks))
        if len(blocks) < n:
            blocks = np.concatenate((blocks, np.full(n - len(blocks), -1, dtype=np.int64)))
    missing = np.flatnonzero(blocks < 0)
    if len(missing):
        raise ValueError(f"vertex {int(missing[0])} has no block assignment")
    labels, dense = np.unique(blocks, return_inverse=True)
    if len(labels) > MAX_BLOCKS:
        raise GraphFormatError(f"{len(labels)} blocks exceed the limit of {MAX_BLOCKS}")
    old_of_new = np.lexsort((np.arange(n), dense))
    new_of_old = np.empty(n, dtype=np.int64)
    new_of_old[old_of_new] = np.arange(n)
    counts = np.bincount(dense, minlength=len(labels))
    starts = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)
    s, d = symmetrize(new_of_old[src], new_of_old[dst])
    return write_store(out_dir, n, s, d, starts, 0, id_width, offset_width, remap=old_of_new)


def store_exists(path) -> bool:
    return os.path.exists(os.path.join(path, "meta.bin"))
