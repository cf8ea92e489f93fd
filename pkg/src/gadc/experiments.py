"""Experiment protocols: denoising, structure-attack defense, heterophily sweep.

Every bench is a pure function of (data, config, base seed). Run ``r`` uses
seed ``base + r`` for its noise / perturbation / split draws and for the head
initialization, and every cell inside a run consumes the same draws, so cells
can be compared pairwise.
"""
from __future__ import annotations

import copy
import hashlib
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import rng
from .diffusion import DiffusionConfig, DiffusionReport, build_for_config, diffuse_features, diffusion_report
from .errors import InputError
from .graph import Graph, LabeledDataset, row_normalize_features
from .io import read_graph, read_labels, read_matrix, read_splits
from .model import HeadConfig, evaluate, train_head
from .perturb import NoiseSpec, SbmSpec, add_flip_noise, add_gaussian_noise, generate_sbm, perturb_structure, stratified_split
from .transition import TransitionOption

log = logging.getLogger(__name__)

SCENARIOS = ("denoise", "attack", "heterophily", "plain")
HETEROPHILY_EPSILONS = (0.0, 1.0, 2.0, 3.0, 4.0)


@dataclass
class ExperimentConfig:
    scenario: str = "plain"
    data: dict = field(default_factory=lambda: {"sbm": {}})
    diffusion: dict = field(default_factory=dict)
    head: dict = field(default_factory=dict)
    noise: dict | None = None
    perturbation: dict | None = None
    epsilons: list | None = None
    runs: int = 1
    seed: int = 0
    name: str = ""
    description: str = ""
    notes: str = ""

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise InputError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if int(self.runs) < 1:
            raise InputError(f"runs must be >= 1, got {self.runs}")
        self.runs = int(self.runs)
        self.seed = int(self.seed)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        return cls(**copy.deepcopy(raw))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InputError(f"{path}: {exc}") from None
        cfg = cls.from_dict(raw)
        base = Path(path).parent
        for key in ("dir", "edges", "features", "labels", "splits"):
            if key in cfg.data and not Path(cfg.data[key]).is_absolute():
                candidate = base / cfg.data[key]
                if candidate.exists():
                    cfg.data[key] = str(candidate)
        return cfg

    def to_dict(self) -> dict:
        return copy.deepcopy(self.__dict__)

    def diffusion_config(self, **overrides) -> DiffusionConfig:
        return DiffusionConfig(**{**self.diffusion, **overrides})

    def head_config(self, **overrides) -> HeadConfig:
        return HeadConfig(**{**self.head, **overrides})


@dataclass
class RunReport:
    cell: str
    accuracies: list
    diffusion: dict | None = None
    timings: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def std(self) -> float:
        """Population standard deviation (ddof=0) of the per-run accuracies."""
        return float(np.std(self.accuracies))

    def to_dict(self, with_timings: bool = True) -> dict:
        out = {"cell": self.cell, "accuracies": self.accuracies, "mean": self.mean, "std": self.std,
               "runs": len(self.accuracies), "diffusion": self.diffusion, "config": self.config}
        if with_timings:
            out["timings"] = self.timings
        return out


# ---------------------------------------------------------------- data

def load_dataset(data: dict, seed: int = 0) -> tuple[Graph, LabeledDataset]:
    """From an ``sbm`` spec, or from files (``dir`` or explicit paths)."""
    if "sbm" in data:
        spec = SbmSpec(**{"seed": seed, **data["sbm"]})
        return generate_sbm(spec)
    root = Path(data["dir"]) if "dir" in data else None

    def locate(key, *names):
        if key in data:
            return Path(data[key])
        if root is None:
            raise InputError(f"data config needs {key!r} or 'dir'")
        for nm in names:
            if (root / nm).exists():
                return root / nm
        raise InputError(f"{root}: none of {names} found")

    x = read_matrix(locate("features", "features.bin", "features.csv"))
    n = x.shape[0]
    g = read_graph(locate("edges", "edges.tsv", "edges.txt"), n)
    labels = read_labels(locate("labels", "labels.csv"), n)
    try:
        splits = read_splits(locate("splits", "splits.json"))
    except InputError:
        splits = dict(zip(("train", "val", "test"), stratified_split(labels, rng.stream(seed, rng.SPLIT))))
    return g, LabeledDataset(x, labels, splits["train"], splits["val"], splits["test"])


# ---------------------------------------------------------------- helpers

def _noisy_features(x, noise: dict | None, seed: int) -> np.ndarray:
    if not noise:
        return row_normalize_features(x)
    spec = NoiseSpec(kind=noise.get("kind", "gaussian"), level=float(noise.get("level", 0.0)), seed=seed)
    noisy = add_gaussian_noise(x, spec) if spec.kind == "gaussian" else add_flip_noise(x, spec)
    return row_normalize_features(noisy)


def _aggregate(g, x, cfg: DiffusionConfig | None):
    if cfg is None:
        return x
    t = build_for_config(g, x, cfg)
    return diffuse_features(t, x, cfg)


def _map(fn, items, workers: int):
    if workers <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _assemble(cells: dict, per_run: list, timings: list, config: dict, diffusion: dict | None = None) -> list:
    reports = []
    for name, cell_cfg in cells.items():
        accs = [run[name] for run in per_run]
        t = {"total_s": float(sum(tm[name] for tm in timings))}
        reports.append(RunReport(name, accs, (diffusion or {}).get(name), t, {"cell": cell_cfg}))
    return reports


def _cell_dict(cfg: DiffusionConfig | None) -> dict | None:
    return None if cfg is None else cfg.to_dict()


# ---------------------------------------------------------------- benches

def denoise_cells(cfg: ExperimentConfig) -> dict:
    """No diffusion, the epsilon=0 control, and the configured GADC cell."""
    main = cfg.diffusion_config()
    cells = {"no_diffusion": None, "eps0": replace(main, epsilon=0.0, option=TransitionOption.PLAIN)}
    if main.option is not TransitionOption.PLAIN and main.epsilon > 0:
        cells[f"gadc_{main.option.name}"] = main
    return cells


def denoise_bench(cfg: ExperimentConfig, g: Graph, ds: LabeledDataset, workers: int = 1) -> list[RunReport]:
    cells = denoise_cells(cfg)

    def one(r):
        seed = cfg.seed + r
        x = _noisy_features(ds.features, cfg.noise, seed)
        head = cfg.head_config(seed=seed)
        accs, times = {}, {}
        for name, dcfg in cells.items():
            t0 = time.perf_counter()
            f = _aggregate(g, x, dcfg)
            accs[name] = evaluate(train_head(f, ds, head), f, ds, "test")
            times[name] = time.perf_counter() - t0
        return accs, times

    results = _map(one, range(cfg.runs), workers)
    return _assemble({k: _cell_dict(v) for k, v in cells.items()}, [a for a, _ in results],
                     [t for _, t in results], cfg.to_dict())


def attack_bench(cfg: ExperimentConfig, g: Graph, ds: LabeledDataset, workers: int = 1) -> list[RunReport]:
    """Option IV vs the plain transition on the same perturbed graph."""
    pert = cfg.perturbation or {}
    fixed = None
    if "file" in pert:
        fixed = read_graph(pert["file"], g.n)
    main = cfg.diffusion_config(option=TransitionOption.IV)
    cells = {"gadc_IV": main, "plain": replace(main, option=TransitionOption.PLAIN, epsilon=0.0)}
    x = _noisy_features(ds.features, cfg.noise, cfg.seed)

    def one(r):
        seed = cfg.seed + r
        if fixed is not None:
            graph = fixed
        else:
            p = perturb_structure(g, ds.labels, float(pert.get("rate", 0.0)), pert.get("mode", "add_cross_class"), seed)
            if not p.complete:
                log.warning("run %d: perturbation partial (%d of %d)", r, p.added + p.removed, p.requested)
            graph = p.graph
        head = cfg.head_config(seed=seed)
        accs, times = {}, {}
        for name, dcfg in cells.items():
            t0 = time.perf_counter()
            f = _aggregate(graph, x, dcfg)
            accs[name] = evaluate(train_head(f, ds, head), f, ds, "test")
            times[name] = time.perf_counter() - t0
        return accs, times

    results = _map(one, range(cfg.runs), workers)
    return _assemble({k: _cell_dict(v) for k, v in cells.items()}, [a for a, _ in results],
                     [t for _, t in results], cfg.to_dict())


def heterophily_sweep(cfg: ExperimentConfig, g: Graph, ds: LabeledDataset, workers: int = 1) -> list[RunReport]:
    """Option I over an epsilon grid; each run draws a fresh 60/20/20 split."""
    eps_grid = [float(e) for e in (cfg.epsilons if cfg.epsilons is not None else HETEROPHILY_EPSILONS)]
    base = cfg.diffusion_config(option=TransitionOption.I)
    cells = {f"eps={e:g}": replace(base, epsilon=e) for e in eps_grid}
    x = _noisy_features(ds.features, cfg.noise, cfg.seed)

    def one(r):
        seed = cfg.seed + r
        split = stratified_split(ds.labels, rng.stream(seed, rng.SPLIT))
        run_ds = ds.with_splits(*split)
        head = cfg.head_config(seed=seed)
        accs, times = {}, {}
        for name, dcfg in cells.items():
            t0 = time.perf_counter()
            f = _aggregate(g, x, dcfg)
            accs[name] = evaluate(train_head(f, run_ds, head), f, run_ds, "test")
            times[name] = time.perf_counter() - t0
        return accs, times

    results = _map(one, range(cfg.runs), workers)
    return _assemble({k: _cell_dict(v) for k, v in cells.items()}, [a for a, _ in results],
                     [t for _, t in results], cfg.to_dict())


def plain_bench(cfg: ExperimentConfig, g: Graph, ds: LabeledDataset, workers: int = 1) -> list[RunReport]:
    dcfg = cfg.diffusion_config()
    x = _noisy_features(ds.features, cfg.noise, cfg.seed)
    f = _aggregate(g, x, dcfg)

    def one(r):
        t0 = time.perf_counter()
        acc = evaluate(train_head(f, ds, cfg.head_config(seed=cfg.seed + r)), f, ds, "test")
        return {"diffused": acc}, {"diffused": time.perf_counter() - t0}

    results = _map(one, range(cfg.runs), workers)
    return _assemble({"diffused": dcfg.to_dict()}, [a for a, _ in results], [t for _, t in results], cfg.to_dict())


BENCHES = {"denoise": denoise_bench, "attack": attack_bench, "heterophily": heterophily_sweep, "plain": plain_bench}


# ---------------------------------------------------------------- reports

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, TransitionOption):
        return obj.value
    return obj


def strip_timings(obj):
    if isinstance(obj, dict):
        return {k: strip_timings(v) for k, v in obj.items() if k not in ("timings", "elapsed_s")}
    if isinstance(obj, list):
        return [strip_timings(v) for v in obj]
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def determinism_hash(obj) -> str:
    """sha256 of the canonical JSON with timing fields removed."""
    canon = json.dumps(strip_timings(_jsonable(obj)), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def bench_payload(scenario: str, reports: list[RunReport], config: ExperimentConfig) -> dict:
    cells = [r.to_dict() for r in reports]
    payload = {"scenario": scenario, "config": config.to_dict(), "cells": cells}
    if scenario == "heterophily":
        best = max(reports, key=lambda r: (r.mean, -reports.index(r)))
        payload["summary"] = {"best_cell": best.cell, "best_mean": best.mean,
                              "means": {r.cell: r.mean for r in reports}}
    elif len(reports) > 1:
        payload["summary"] = {"means": {r.cell: r.mean for r in reports}}
    payload["determinism_sha256"] = determinism_hash({k: v for k, v in payload.items()})
    return payload


def summary_csv(reports: list[RunReport]) -> str:
    lines = ["cell,runs,mean,std"]
    for r in reports:
        lines.append(f"{r.cell},{len(r.accuracies)},{r.mean!r},{r.std!r}")
    return "\n".join(lines) + "\n"


def paired_wins(a: list, b: list, strict: bool = True) -> int:
    a, b = np.asarray(a), np.asarray(b)
    return int(np.sum(a > b) if strict else np.sum(a >= b))


def run_diffusion_report(g: Graph, x: np.ndarray, cfg: DiffusionConfig) -> tuple[np.ndarray, DiffusionReport]:
    t = build_for_config(g, x, cfg)
    return diffuse_features(t, x, cfg), diffusion_report(t, cfg)
