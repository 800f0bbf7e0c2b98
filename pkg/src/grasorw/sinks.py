"""Output sinks: trajectory assembly and endpoint counting.

The engine reports a walk in pieces.  The first piece starts at the source
(hop 0); each later piece lists the vertices visited after an *anchor* vertex
where the walk was persisted.  Assembling joins pieces on (source, hop, vertex).
"""
from __future__ import annotations

import struct
from collections import defaultdict
from pathlib import Path

import numpy as np


class TrajectorySink:
    wants_segments = True

    def __init__(self):
        self._parts = []  # (sources, anchors, first_hops, lengths, flat vertices)

    def segments(self, sources, anchors, first_hops, lengths, vertices):
        self._parts.append((np.asarray(sources, dtype=np.int64), np.asarray(anchors, dtype=np.int64),
                            np.asarray(first_hops, dtype=np.int64), np.asarray(lengths, dtype=np.int64),
                            np.asarray(vertices, dtype=np.int64)))

    def finished(self, sources, last_vertices, hops):
        pass

    def walks(self) -> list[tuple[int, np.ndarray]]:
        """Assembled walks in canonical order (source, then vertex sequence)."""
        if not self._parts:
            return []
        src, anc, hop0, lens, flat = (np.concatenate(c) for c in zip(*self._parts))
        heads = hop0 == 0
        per_source = np.bincount(src[heads]) if heads.any() else np.zeros(0, dtype=np.int64)
        if len(per_source) and per_source.max() <= 1:
            return self._join_unique(src, hop0, lens, flat)
        bounds = np.concatenate(([0], np.cumsum(lens)))
        pieces = [flat[bounds[k]: bounds[k + 1]] for k in range(len(src))]
        out = self._join_chained(src, anc, hop0, pieces)
        out.sort(key=lambda w: (w[0], tuple(w[1].tolist())))
        return out

    @staticmethod
    def _join_unique(src, hop0, lens, flat):
        """One walk per source: order pieces by (source, hop) and cut at source changes."""
        order = np.lexsort((hop0, src))
        starts = np.cumsum(lens) - lens
        ol = lens[order]
        idx = np.repeat(starts[order] - (np.cumsum(ol) - ol), ol) + np.arange(int(ol.sum()))
        seq = flat[idx]
        s_sorted = src[order]
        first = np.flatnonzero(np.r_[True, s_sorted[1:] != s_sorted[:-1]])
        walk_len = np.add.reduceat(ol, first)
        cuts = np.cumsum(walk_len)[:-1]
        return list(zip(s_sorted[first].tolist(), np.split(seq, cuts)))

    @staticmethod
    def _join_chained(src, anc, hop0, pieces):
        # open[(source, last hop, last vertex)] -> walks waiting for a continuation
        open_walks = defaultdict(list)
        for k in np.lexsort((hop0, src)):
            s, h = int(src[k]), int(hop0[k])
            if h == 0:
                walk = [pieces[k]]
            else:
                walk = open_walks[(s, h - 1, int(anc[k]))].pop()
                walk.append(pieces[k])
            last = h + len(pieces[k]) - 1
            open_walks[(s, last, int(pieces[k][-1]))].append(walk)
        out = []
        for (s, _, _), walks in open_walks.items():
            out.extend((s, np.concatenate(w)) for w in walks)
        return out


def write_trajectories(path, walks, id_width: int = 4) -> None:
    """Binary records: source u64, length u32, then ``length`` vertex ids."""
    vdt = "<u4" if id_width == 4 else "<u8"
    with open(path, "wb") as fh:
        for s, w in walks:
            fh.write(struct.pack("<QI", s, len(w)))
            fh.write(np.asarray(w).astype(vdt).tobytes())


def read_trajectories(path, id_width: int = 4) -> list[tuple[int, np.ndarray]]:
    vdt = np.dtype("<u4" if id_width == 4 else "<u8")
    data = Path(path).read_bytes()
    out, pos = [], 0
    while pos < len(data):
        s, n = struct.unpack_from("<QI", data, pos)
        pos += 12
        out.append((s, np.frombuffer(data, dtype=vdt, count=n, offset=pos).astype(np.int64)))
        pos += n * vdt.itemsize
    return out


def trajectories_bytes(walks, id_width: int = 4) -> bytes:
    vdt = "<u4" if id_width == 4 else "<u8"
    return b"".join(struct.pack("<QI", s, len(w)) + np.asarray(w).astype(vdt).tobytes()
                    for s, w in walks)


class EndpointSink:
    """Counts where walks stop, per source; the PageRank estimate."""

    wants_segments = False

    def __init__(self):
        self._src, self._end = [], []

    def segments(self, *args):
        pass

    def finished(self, sources, last_vertices, hops):
        self._src.append(np.asarray(sources, dtype=np.int64))
        self._end.append(np.asarray(last_vertices, dtype=np.int64))

    def visit_counts(self) -> dict[int, dict[int, int]]:
        if not self._src:
            return {}
        pairs = np.stack((np.concatenate(self._src), np.concatenate(self._end)), axis=1)
        keys, counts = np.unique(pairs, axis=0, return_counts=True)
        out: dict[int, dict[int, int]] = defaultdict(dict)
        for (s, v), c in zip(keys.tolist(), counts.tolist()):
            out[s][v] = c
        return dict(out)


class CountingSink:
    """Trajectory-free sink that still records how many walks finished per source."""

    wants_segments = False

    def __init__(self):
        self.count = 0

    def segments(self, *args):
        pass

    def finished(self, sources, last_vertices, hops):
        self.count += len(sources)
