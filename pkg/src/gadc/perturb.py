"""Feature noise, synthetic graphs and label-aware structure perturbation.

Everything random here is a pure function of its inputs and a seed; see
``gadc.rng`` for how seeds fan out into streams.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, NamedTuple

import numpy as np
import scipy.sparse as sp

from . import rng
from .errors import DomainError, InputError
from .graph import Graph, LabeledDataset

# noise grids used in the citation / large-graph protocols
GAUSSIAN_LEVELS_CITATION = (0.1, 0.2, 0.3, 0.4, 0.5, 100.0)
GAUSSIAN_LEVELS_PUBMED = (0.01, 0.02, 0.03, 0.04, 0.05, 100.0)
GAUSSIAN_LEVELS_LARGE = (0.1, 1.0)
FLIP_LEVELS = (0.1, 0.2, 0.4)
PERTURBATION_RATES = (0.25, 0.5, 0.75)


@dataclass(frozen=True)
class NoiseSpec:
    kind: Literal["gaussian", "flip"] = "gaussian"
    level: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind == "gaussian":
            if not self.level >= 0:
                raise InputError(f"gaussian noise level must be >= 0, got {self.level}")
        elif self.kind == "flip":
            if not 0 <= self.level <= 1:
                raise InputError(f"flip probability must be in [0, 1], got {self.level}")
        else:
            raise InputError(f"unknown noise kind {self.kind!r}")


@dataclass(frozen=True)
class SbmSpec:
    n: int = 1000
    blocks: int = 2
    p_in: float = 0.02
    p_out: float = 0.002
    d: int = 16
    feature_separation: float = 2.0
    seed: int = 0

    def __post_init__(self):
        for name in ("p_in", "p_out"):
            p = getattr(self, name)
            if not 0 <= p <= 1:
                raise InputError(f"{name} must be a probability, got {p}")
        if self.n < self.blocks or self.blocks < 1:
            raise InputError(f"need 1 <= blocks <= n, got blocks={self.blocks}, n={self.n}")
        if self.d < 1:
            raise InputError("feature dimension must be >= 1")

    @property
    def homophilous(self) -> bool:
        return self.p_in > self.p_out


def add_gaussian_noise(x: np.ndarray, spec: NoiseSpec) -> np.ndarray:
    """X + level * Y with Y iid standard normal."""
    if spec.kind != "gaussian":
        raise InputError(f"expected a gaussian NoiseSpec, got {spec.kind!r}")
    x = np.asarray(x, dtype=np.float64)
    if spec.level == 0:
        return x.copy()
    return x + spec.level * rng.stream(spec.seed, rng.NOISE).standard_normal(x.shape)


def flip_mask(shape, p: float, seed: int) -> np.ndarray:
    return rng.stream(seed, rng.FLIP).random(shape) < p


def add_flip_noise(x: np.ndarray, spec: NoiseSpec, return_mask: bool = False):
    """Flip each binary entry independently with probability ``level``."""
    if spec.kind != "flip":
        raise InputError(f"expected a flip NoiseSpec, got {spec.kind!r}")
    x = np.asarray(x, dtype=np.float64)
    if not np.isin(x, (0.0, 1.0)).all():
        raise DomainError("flip noise needs a binary (0/1) feature matrix")
    mask = flip_mask(x.shape, spec.level, spec.seed)
    out = np.where(mask, 1.0 - x, x)
    return (out, mask) if return_mask else out


def block_labels(n: int, blocks: int) -> np.ndarray:
    """Contiguous, balanced block ids (sizes differ by at most one)."""
    return (np.arange(n) * blocks) // n


def stratified_split(labels: np.ndarray, gen: np.random.Generator, fractions=(0.6, 0.2, 0.2)):
    """Per-class shuffle, then cut each class by ``fractions`` (train, val, test)."""
    labels = np.asarray(labels)
    parts = ([], [], [])
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        idx = idx[gen.permutation(idx.size)]
        n_train = int(math.floor(fractions[0] * idx.size))
        n_val = int(math.floor(fractions[1] * idx.size))
        parts[0].append(idx[:n_train])
        parts[1].append(idx[n_train:n_train + n_val])
        parts[2].append(idx[n_train + n_val:])
    return tuple(np.sort(np.concatenate(p)).astype(np.int64) for p in parts)


def _sbm_adjacency(n, labels, p_in, p_out, gen, chunk=512) -> sp.csr_matrix:
    rows, cols = [], []
    for start in range(0, n, chunk):
        stop = min(n, start + chunk)
        u = gen.random((stop - start, n))
        same = labels[start:stop, None] == labels[None, :]
        prob = np.where(same, p_in, p_out)
        upper = np.arange(n)[None, :] > np.arange(start, stop)[:, None]
        r, c = np.nonzero((u < prob) & upper)
        rows.append(r + start)
        cols.append(c)
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    data = np.ones(2 * r.size)
    return sp.csr_matrix((data, (np.concatenate([r, c]), np.concatenate([c, r]))), shape=(n, n))


def sbm_features(labels: np.ndarray, d: int, separation: float, gen: np.random.Generator) -> np.ndarray:
    """Class mean (separation * unit direction) plus unit Gaussian."""
    classes = int(labels.max()) + 1
    if d >= classes:
        directions = np.eye(d)[:classes]
    else:
        directions = gen.standard_normal((classes, d))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    return separation * directions[labels] + gen.standard_normal((labels.size, d))


def generate_sbm(spec: SbmSpec) -> tuple[Graph, LabeledDataset]:
    labels = block_labels(spec.n, spec.blocks)
    adj = _sbm_adjacency(spec.n, labels, spec.p_in, spec.p_out, rng.stream(spec.seed, rng.GRAPH))
    x = sbm_features(labels, spec.d, spec.feature_separation, rng.stream(spec.seed, rng.FEATURES))
    train, val, test = stratified_split(labels, rng.stream(spec.seed, rng.SPLIT))
    return Graph(spec.n, adj), LabeledDataset(x, labels, train, val, test)


def erdos_renyi(n: int, p: float, seed: int) -> Graph:
    """G(n, p) without self-loops."""
    adj = _sbm_adjacency(n, np.zeros(n, dtype=np.int64), p, p, rng.stream(seed, rng.GRAPH))
    return Graph(n, adj)


def homophily_ratio(g: Graph, labels: np.ndarray) -> float:
    """Fraction of (off-diagonal) edges joining same-label endpoints."""
    rows, cols, _ = g.edge_array()
    if rows.size == 0:
        return float("nan")
    labels = np.asarray(labels)
    return float(np.mean(labels[rows] == labels[cols]))


GALLERY = ("isolated", "star4", "complete4", "decentralized12")


def generate_gallery(which: str) -> Graph:
    """Fixed small topologies for connectivity-factor illustrations.

    ``decentralized12`` is the circulant graph on 12 nodes with offsets 1 and
    2: every node has degree 4 and no node is a hub.
    """
    if which == "isolated":
        return Graph.from_edges(4, [])
    if which == "star4":
        return Graph.from_edges(4, [(0, 1), (0, 2), (0, 3)])
    if which == "complete4":
        return Graph.from_edges(4, [(i, j) for i in range(4) for j in range(i + 1, 4)])
    if which == "decentralized12":
        return Graph.from_edges(12, [(i, (i + s) % 12) for i in range(12) for s in (1, 2)])
    raise InputError(f"unknown gallery graph {which!r}; choose from {', '.join(GALLERY)}")


class Perturbation(NamedTuple):
    graph: Graph
    requested: int
    added: int
    removed: int

    @property
    def complete(self) -> bool:
        return self.added + self.removed == self.requested


def _undirected_pairs(g: Graph) -> np.ndarray:
    rows, cols, _ = g.edge_array()
    keep = rows < cols
    return np.stack([rows[keep], cols[keep]], axis=1)


def _sample_cross_pairs(n, labels, existing: set, count, gen):
    counts = np.bincount(labels)
    total_cross = (n * n - int(np.sum(counts.astype(np.int64) ** 2))) // 2
    existing_cross = sum(1 for i, j in existing if labels[i] != labels[j])
    available = total_cross - existing_cross
    if count >= available:
        i, j = np.triu_indices(n, 1)
        cand = [(a, b) for a, b in zip(i.tolist(), j.tolist()) if labels[a] != labels[b] and (a, b) not in existing]
        return cand
    chosen = []
    seen = set(existing)
    while len(chosen) < count:
        need = count - len(chosen)
        a = gen.integers(0, n, size=2 * need + 16)
        b = gen.integers(0, n, size=2 * need + 16)
        for u, v in zip(a.tolist(), b.tolist()):
            if u == v or labels[u] == labels[v]:
                continue
            pair = (u, v) if u < v else (v, u)
            if pair in seen:
                continue
            seen.add(pair)
            chosen.append(pair)
            if len(chosen) == count:
                break
    return chosen


def perturb_structure(g: Graph, labels, rate: float, mode: str = "add_cross_class", seed: int = 0) -> Perturbation:
    """Label-aware random edge insertions / deletions.

    The budget is floor(rate * |E|). ``add_cross_class`` inserts new edges
    between differently-labelled nodes, ``remove_within_class`` deletes
    same-label edges, ``mixed`` splits the budget between the two. When
    there are too few candidates the result is partial; compare ``added +
    removed`` with ``requested``.
    """
    if rate < 0:
        raise InputError(f"perturbation rate must be >= 0, got {rate}")
    if mode not in ("add_cross_class", "remove_within_class", "mixed"):
        raise InputError(f"unknown perturbation mode {mode!r}")
    labels = np.asarray(labels, dtype=np.int64)
    budget = int(math.floor(rate * g.num_edges))
    if budget == 0:
        return Perturbation(g, 0, 0, 0)
    n_add = budget if mode == "add_cross_class" else (budget // 2 if mode == "mixed" else 0)
    n_remove = budget - n_add
    gen = rng.stream(seed, rng.PERTURB)
    pairs = _undirected_pairs(g)
    existing = set(map(tuple, pairs.tolist()))

    removed = []
    if n_remove:
        within = np.flatnonzero(labels[pairs[:, 0]] == labels[pairs[:, 1]])
        pick = within[gen.permutation(within.size)[:n_remove]]
        removed = [tuple(p) for p in pairs[pick].tolist()]
    added = _sample_cross_pairs(g.n, labels, existing, n_add, gen) if n_add else []

    coo = sp.triu(g.adj).tocoo()
    keep = np.ones(coo.nnz, dtype=bool)
    if removed:
        drop = set(removed)
        keep = np.array([(r, c) not in drop for r, c in zip(coo.row.tolist(), coo.col.tolist())], dtype=bool)
    rows = np.concatenate([coo.row[keep], np.asarray([p[0] for p in added], dtype=np.int64)])
    cols = np.concatenate([coo.col[keep], np.asarray([p[1] for p in added], dtype=np.int64)])
    w = np.concatenate([coo.data[keep], np.ones(len(added))])
    off = rows != cols
    adj = sp.coo_matrix(
        (np.concatenate([w, w[off]]), (np.concatenate([rows, cols[off]]), np.concatenate([cols, rows[off]]))),
        shape=(g.n, g.n),
    )
    return Perturbation(Graph(g.n, adj), budget, len(added), len(removed))
