"""``grasorw`` command line."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import re
import sys
from pathlib import Path

import numpy as np

from . import synthetic
from .engine import SCHEDULERS, EngineConfig
from .graph_store import (
    EdgeListError, GraphFormatError, PartitionedGraph, import_partition, partition_sequential,
    store_exists,
)
from .loader_model import LoaderModel
from .oracle import oracle_run
from .sinks import write_trajectories
from .tasks import PRNV, RWNV, DeepWalkGen, config_for, ppr_estimates, run_task

log = logging.getLogger("grasorw")

_UNITS = {"": 1, "b": 1, "k": 1000, "kb": 1000, "kib": 1024, "m": 10**6, "mb": 10**6,
          "mib": 2**20, "g": 10**9, "gb": 10**9, "gib": 2**30}


def parse_size(text: str) -> int:
    m = re.fullmatch(r"\s*(\d+)\s*([a-zA-Z]*)\s*", text)
    if not m or m.group(2).lower() not in _UNITS:
        raise argparse.ArgumentTypeError(f"bad size {text!r}")
    return int(m.group(1)) * _UNITS[m.group(2).lower()]


def _task_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--store", required=True, type=Path)
    p.add_argument("--task", choices=("rwnv", "prnv", "deepwalk"), default="rwnv")
    p.add_argument("--p", type=float, default=1.0)
    p.add_argument("--q", type=float, default=1.0)
    p.add_argument("--walks-per-vertex", type=int, default=10)
    p.add_argument("--length", type=int, default=80)
    p.add_argument("--decay", type=float, default=0.85)
    p.add_argument("--max-length", type=int, default=20)
    p.add_argument("--samples-per-query", type=int, default=None)
    p.add_argument("--query-nodes", type=Path, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--deterministic", action="store_true")


def _engine_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--scheduler", choices=SCHEDULERS, default="iteration")
    p.add_argument("--engine", choices=("triangular", "plainbucket"), default="triangular")
    p.add_argument("--loading", choices=("full", "ondemand", "learned"), default="full")
    p.add_argument("--loader-model", type=Path, default=None,
                   help="model file for --loading learned (default: STORE/loader_model.json)")
    p.add_argument("--workdir", type=Path, default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="grasorw", description="Out-of-core second-order random walks")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("partition", help="convert an edge list into a block store")
    p.add_argument("--input", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--block-size", type=parse_size, default=parse_size("16MiB"))
    p.add_argument("--block-file", type=Path, default=None)
    p.add_argument("--id-width", type=int, choices=(4, 8), default=4)
    p.add_argument("--offset-width", type=int, choices=(4, 8), default=8)

    p = sub.add_parser("run", help="run a walk task out of core")
    _task_flags(p)
    _engine_flags(p)
    p.add_argument("--metrics-out", type=Path, default=None)
    p.add_argument("--traj-out", default="null", help="trajectory file, or 'null' to discard")
    p.add_argument("--ppr-out", type=Path, default=None, help="PRNV estimates (default: stdout)")
    p.add_argument("--top", type=int, default=10)
    p.add_argument("--validate", action="store_true", help="check every step is an edge")

    p = sub.add_parser("train-loader", help="calibrate the full/on-demand loading model")
    _task_flags(p)
    _engine_flags(p)
    p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("bench-schedulers", help="compare scheduling strategies")
    _task_flags(p)
    _engine_flags(p)
    p.add_argument("--out", type=Path, default=None, help="CSV file (default: stdout)")

    p = sub.add_parser("gen", help="write a synthetic edge list")
    p.add_argument("--kind", choices=("er", "star", "two-community"), required=True)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--avg-degree", type=float, default=10.0)
    p.add_argument("--leaves", type=int, default=5)
    p.add_argument("--p-in", type=float, default=0.1)
    p.add_argument("--p-out", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("oracle", help="run a task fully in memory")
    _task_flags(p)
    p.add_argument("--traj-out", default="null")
    p.add_argument("--ppr-out", type=Path, default=None)
    p.add_argument("--top", type=int, default=10)
    return ap


def task_from_args(a, vertex_count: int):
    if a.task == "deepwalk":
        return DeepWalkGen(a.walks_per_vertex, a.length)
    if a.task == "rwnv":
        return RWNV(a.walks_per_vertex, a.length, a.p, a.q)
    if a.query_nodes is None:
        raise ValueError("--task prnv needs --query-nodes")
    queries = tuple(int(x) for x in np.loadtxt(a.query_nodes, dtype=np.int64, ndmin=1))
    return PRNV(queries, a.decay, a.max_length, a.samples_per_query or 4 * vertex_count, a.p, a.q)


def _config(a, task, loading=None) -> EngineConfig:
    return config_for(task, scheduler=a.scheduler, engine_mode=a.engine,
                      loading_mode=loading or a.loading, threads=a.threads, seed=a.seed,
                      deterministic=a.deterministic)


def _deterministic_starts(a, task):
    if a.deterministic and not isinstance(task, PRNV) and task.walks_per_vertex != 1:
        raise ValueError("--deterministic needs --walks-per-vertex 1")


def _write_ppr(estimates, path, top):
    text = json.dumps([e.to_json(top) for e in estimates], indent=2)
    if path is None:
        print(text)
    else:
        Path(path).write_text(text)


def validate_walks(graph: PartitionedGraph, walks) -> None:
    offsets, nbrs = graph.read_all()
    for s, w in walks:
        for a, b in zip(w[:-1], w[1:]):
            row = nbrs[offsets[a]: offsets[a + 1]]
            i = np.searchsorted(row, b)
            if i >= len(row) or row[i] != b:
                raise RuntimeError(f"walk from {s} takes non-edge {a}->{b}")


def cmd_partition(a) -> int:
    if a.block_file is not None:
        g = import_partition(a.input, a.block_file, a.out, a.id_width, a.offset_width)
    else:
        g = partition_sequential(a.input, a.out, a.block_size, a.id_width, a.offset_width)
    log.info("store %s: %d vertices, %d blocks", a.out, g.vertex_count, g.block_count)
    return 0


def _open_store(path) -> PartitionedGraph:
    if not store_exists(path):
        raise FileNotFoundError(f"no store at {path}")
    return PartitionedGraph(path)


def _loader(a):
    if a.loading != "learned":
        return None
    path = a.loader_model or a.store / "loader_model.json"
    if not path.exists():
        raise FileNotFoundError(f"--loading learned needs a loader model ({path} missing)")
    return LoaderModel.load(path)


def cmd_run(a) -> int:
    g = _open_store(a.store)
    task = task_from_args(a, g.vertex_count)
    _deterministic_starts(a, task)
    metrics, sink = run_task(g, task, _config(a, task), loader=_loader(a), workdir=a.workdir)
    if isinstance(task, PRNV):
        _write_ppr(ppr_estimates(task, sink), a.ppr_out, a.top)
    else:
        walks = sink.walks()
        if a.validate:
            validate_walks(g, walks)
        if a.traj_out != "null":
            write_trajectories(a.traj_out, walks, g.meta.id_width)
    out = json.dumps(metrics.to_json(), indent=2)
    if a.metrics_out is None:
        print(out, file=sys.stderr)
    else:
        a.metrics_out.write_text(out)
    return 0


def train_loader(graph, task, base: dict, timing_hook=None, workdir=None) -> LoaderModel:
    """Calibrate with an all-full pass and an all-on-demand pass, then fit."""
    lm = LoaderModel()
    for mode in ("full", "ondemand"):
        cfg = config_for(task, loading_mode=mode, **base)
        run_task(graph, task, cfg, recorder=lm, timing_hook=timing_hook, workdir=workdir)
    return lm.fit()


def cmd_train_loader(a) -> int:
    g = _open_store(a.store)
    task = task_from_args(a, g.vertex_count)
    _deterministic_starts(a, task)
    base = dict(scheduler=a.scheduler, engine_mode=a.engine, threads=a.threads, seed=a.seed,
                deterministic=a.deterministic)
    lm = train_loader(g, task, base, workdir=a.workdir)
    out = a.out or a.store / "loader_model.json"
    lm.save(out)
    lm.save_samples(out.with_name("loader_samples.csv"))
    log.info("loader model written to %s (%d samples)", out, len(lm.samples))
    return 0


def bench_schedulers(graph, task, base: dict, engines=("triangular", "plainbucket"), workdir=None):
    rows = []
    for engine in engines:
        for s in SCHEDULERS:
            cfg = config_for(task, scheduler=s, engine_mode=engine, **base)
            m, _ = run_task(graph, task, cfg, workdir=workdir)
            rows.append({"strategy": s, "engine": engine, "block_loads": m.block_loads,
                         "block_io_count": m.block_io_count, "block_io_bytes": m.block_io_bytes,
                         "wall_time": round(m.wall_time, 6)})
    return rows


def cmd_bench_schedulers(a) -> int:
    g = _open_store(a.store)
    task = task_from_args(a, g.vertex_count)
    _deterministic_starts(a, task)
    base = dict(loading_mode=a.loading, threads=a.threads, seed=a.seed, deterministic=a.deterministic)
    if a.loading == "learned":
        raise ValueError("bench-schedulers supports --loading full or ondemand")
    rows = bench_schedulers(g, task, base, workdir=a.workdir)
    fh = open(a.out, "w", newline="") if a.out else sys.stdout
    try:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    finally:
        if a.out:
            fh.close()
    return 0


def cmd_gen(a) -> int:
    kind = {"er": lambda: synthetic.ErdosRenyi(a.n, a.avg_degree),
            "star": lambda: synthetic.Star(a.leaves),
            "two-community": lambda: synthetic.TwoCommunity(a.n, a.p_in, a.p_out)}[a.kind]()
    m = synthetic.gen_synthetic(kind, a.out, a.seed)
    log.info("wrote %d edges to %s", m, a.out)
    return 0


def cmd_oracle(a) -> int:
    g = _open_store(a.store)
    task = task_from_args(a, g.vertex_count)
    _deterministic_starts(a, task)
    offsets, nbrs = g.read_all()
    res = oracle_run(offsets, nbrs, task, a.seed, a.deterministic)
    if isinstance(task, PRNV):
        _write_ppr(res, a.ppr_out, a.top)
    elif a.traj_out != "null":
        write_trajectories(a.traj_out, res, g.meta.id_width)
    return 0


COMMANDS = {"partition": cmd_partition, "run": cmd_run, "train-loader": cmd_train_loader,
            "bench-schedulers": cmd_bench_schedulers, "gen": cmd_gen, "oracle": cmd_oracle}


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("GRASORW_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    a = build_parser().parse_args(argv)
    try:
        return COMMANDS[a.command](a)
    except (EdgeListError, GraphFormatError, ValueError, IndexError, FileNotFoundError) as e:
        print(f"grasorw {a.command}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
