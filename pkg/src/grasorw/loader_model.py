"""Learned choice between full and on-demand loading of ancillary blocks.

Per block, total time (load + execute) is modelled as ``t_f = alpha_f * eta + b_f``
under full load and ``t_o = alpha_o * eta`` under on-demand load, where
``eta = walks / vertices-in-block``.  The two lines cross at
``eta0 = b_f / (alpha_o - alpha_f)``; above it a full load is cheaper.
"""
from __future__ import annotations

import csv
import json
import logging
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

FULL = "full"
ON_DEMAND = "ondemand"
MIN_BLOCK_SAMPLES = 8


class InsufficientSamples(ValueError):
    pass


@dataclass(frozen=True)
class LoadSample:
    block: int
    eta: float
    mode: str
    total_time: float

    def __post_init__(self):
        if self.mode not in (FULL, ON_DEMAND):
            raise ValueError(f"unknown load mode {self.mode!r}")
        if self.eta < 0 or self.total_time < 0:
            raise ValueError("eta and total_time must be nonnegative")


@dataclass(frozen=True)
class BlockCostModel:
    alpha_f: float
    b_f: float
    alpha_o: float
    sample_count: int = 0

    @property
    def degenerate(self) -> bool:
        return not self.alpha_o > self.alpha_f

    @property
    def eta0(self) -> float | None:
        if self.degenerate:
            return None
        return self.b_f / (self.alpha_o - self.alpha_f)

    def choose(self, eta: float) -> str:
        if self.degenerate:
            return ON_DEMAND
        return FULL if eta > self.eta0 else ON_DEMAND

    def to_json(self, block) -> dict:
        return {"block": block, "alpha_f": self.alpha_f, "b_f": self.b_f,
                "alpha_o": self.alpha_o,
                "eta0": "degenerate" if self.degenerate else self.eta0,
                "sample_count": self.sample_count}

    @classmethod
    def from_json(cls, d: dict) -> "BlockCostModel":
        return cls(float(d["alpha_f"]), float(d["b_f"]), float(d["alpha_o"]),
                   int(d.get("sample_count", 0)))


def fit(samples) -> BlockCostModel:
    """Least squares: intercept for full-load times, through the origin for on-demand."""
    full = [(s.eta, s.total_time) for s in samples if s.mode == FULL]
    ond = [(s.eta, s.total_time) for s in samples if s.mode == ON_DEMAND]
    if len(full) < 2 or len({e for e, _ in full}) < 2:
        raise InsufficientSamples("need two full-load samples with distinct eta")
    eo = np.array([e for e, _ in ond], dtype=float)
    if not len(ond) or not np.any(eo > 0):
        raise InsufficientSamples("need an on-demand sample with eta > 0")
    ef, tf = np.array(full, dtype=float).T
    design = np.column_stack((ef, np.ones_like(ef)))
    (alpha_f, b_f), *_ = np.linalg.lstsq(design, tf, rcond=None)
    to = np.array([t for _, t in ond], dtype=float)
    alpha_o = float(eo @ to / (eo @ eo))
    return BlockCostModel(float(alpha_f), float(b_f), alpha_o, len(full) + len(ond))


class LoaderModel:
    """Sample log plus fitted per-block models with a pooled fallback."""

    def __init__(self):
        self.samples: list[LoadSample] = []
        self.blocks: dict[int, BlockCostModel] = {}
        self.global_model: BlockCostModel | None = None

    def record(self, sample: LoadSample) -> None:
        self.samples.append(sample)

    def by_block(self) -> dict[int, list[LoadSample]]:
        out = defaultdict(list)
        for s in self.samples:
            out[s.block].append(s)
        return dict(out)

    def fit(self) -> "LoaderModel":
        self.blocks = {}
        for block, samples in self.by_block().items():
            if len(samples) < MIN_BLOCK_SAMPLES:
                continue
            try:
                self.blocks[block] = fit(samples)
            except InsufficientSamples:
                pass
        try:
            self.global_model = fit(self.samples)
        except InsufficientSamples:
            self.global_model = None
            log.warning("not enough samples for a loader model; full load will be used")
        return self

    def model_for(self, block: int) -> BlockCostModel | None:
        return self.blocks.get(block, self.global_model)

    def choose_mode(self, block: int, walk_count: int, n_v: int) -> str:
        if n_v <= 0:
            raise ValueError("block has no vertices")
        m = self.model_for(block)
        if m is None:
            return FULL
        return m.choose(walk_count / n_v)

    # -- persistence ----------------------------------------------------------
    def to_json(self) -> dict:
        return {
            "blocks": [m.to_json(b) for b, m in sorted(self.blocks.items())],
            "global": None if self.global_model is None else self.global_model.to_json("global"),
            "fallback": self.global_model is None,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2))

    @classmethod
    def load(cls, path) -> "LoaderModel":
        data = json.loads(Path(path).read_text())
        lm = cls()
        lm.blocks = {int(d["block"]): BlockCostModel.from_json(d) for d in data.get("blocks", [])}
        g = data.get("global")
        lm.global_model = BlockCostModel.from_json(g) if g else None
        return lm

    def save_samples(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["block", "mode", "eta", "total_time_seconds"])
            for s in self.samples:
                w.writerow([s.block, s.mode, repr(s.eta), repr(s.total_time)])

    @classmethod
    def load_samples(cls, path) -> "LoaderModel":
        lm = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                lm.record(LoadSample(int(row["block"]), float(row["eta"]), row["mode"],
                                     float(row["total_time_seconds"])))
        return lm
