"""Walk tasks (RWNV, PRNV, DeepWalk corpus generation) and how they map onto the engine."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import transitions as tm
from .engine import Engine, EngineConfig
from .sinks import EndpointSink, TrajectorySink


@dataclass(frozen=True)
class RWNV:
    walks_per_vertex: int = 10
    length: int = 80
    p: float = 1.0
    q: float = 1.0


@dataclass(frozen=True)
class PRNV:
    query_nodes: tuple = ()
    decay: float = 0.85
    max_length: int = 20
    samples_per_query: int | None = None  # None: 4 * |V|
    p: float = 1.0
    q: float = 1.0


@dataclass(frozen=True)
class DeepWalkGen:
    walks_per_vertex: int = 10
    length: int = 80


Task = RWNV | PRNV | DeepWalkGen


@dataclass
class PprEstimate:
    query: int
    visit_counts: dict = field(default_factory=dict)
    total_samples: int = 0

    def top(self, k: int) -> list[tuple[int, int]]:
        return sorted(self.visit_counts.items(), key=lambda kv: (-kv[1], kv[0]))[:k]

    def to_json(self, k: int = 10) -> dict:
        return {"query": self.query, "top": [list(t) for t in self.top(k)],
                "total_samples": self.total_samples}


def model_of(task: Task):
    if isinstance(task, DeepWalkGen):
        return None
    return tm.Node2vecParams(task.p, task.q)


def termination_of(task: Task):
    if isinstance(task, PRNV):
        return tm.GeometricCapped(task.decay, task.max_length)
    return tm.FixedLength(task.length)


def starts_of(task: Task, degrees: np.ndarray):
    """(sources, walks per source) for a task; isolated vertices get no walks."""
    if isinstance(task, PRNV):
        q = np.asarray(task.query_nodes, dtype=np.int64)
        if len(q) and (q.min() < 0 or q.max() >= len(degrees)):
            raise IndexError("query node out of range")
        n = task.samples_per_query or 4 * len(degrees)
        return q, np.full(len(q), n, dtype=np.int64)
    sources = np.flatnonzero(degrees > 0)
    return sources, np.full(len(sources), task.walks_per_vertex, dtype=np.int64)


def config_for(task: Task, **kwargs) -> EngineConfig:
    return EngineConfig(model=model_of(task), termination=termination_of(task), **kwargs)


def sink_for(task: Task):
    return EndpointSink() if isinstance(task, PRNV) else TrajectorySink()


def ppr_estimates(task: PRNV, sink: EndpointSink) -> list[PprEstimate]:
    counts = sink.visit_counts()
    out = []
    for q in task.query_nodes:
        vc = counts.get(int(q), {})
        n = sum(vc.values())
        out.append(PprEstimate(int(q), vc, n))
    return out


def run_task(graph, task: Task, cfg: EngineConfig | None = None, **engine_kwargs):
    """Execute ``task`` out of core; returns (metrics, sink)."""
    cfg = cfg or config_for(task)
    sink = engine_kwargs.pop("sink", None) or sink_for(task)
    eng = Engine(graph, cfg, sink=sink, **engine_kwargs)
    metrics = eng.run(starts_of(task, graph.degrees()))
    return metrics, sink
