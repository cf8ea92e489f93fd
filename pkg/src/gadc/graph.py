"""Graph and matrix foundations.

Graphs are stored as symmetric CSR matrices with sorted column indices so
that every downstream sparse product runs in a fixed order.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Literal, TextIO

import numpy as np
import scipy.sparse as sp

from .errors import InputError

NormKind = Literal["symmetric", "row_stochastic"]
NORM_KINDS = ("symmetric", "row_stochastic")


def _canonical_csr(m) -> sp.csr_matrix:
    m = sp.csr_matrix(m, dtype=np.float64)
    m.sum_duplicates()
    m.sort_indices()
    return m


@dataclass(frozen=True)
class Graph:
    """Undirected graph with a symmetric CSR adjacency.

    ``self_loops_added`` records whether the renormalization self-loops have
    already been applied, so ``normalize`` never adds them twice.
    """

    n: int
    adj: sp.csr_matrix = field(repr=False)
    self_loops_added: bool = False
    undirected: bool = True

    def __post_init__(self):
        if self.adj.shape != (self.n, self.n):
            raise InputError(f"adjacency shape {self.adj.shape} does not match n={self.n}")
        object.__setattr__(self, "adj", _canonical_csr(self.adj))

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]], weights=None) -> "Graph":
        """Build from undirected pairs; repeated pairs are merged by summing weights."""
        e = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
        w = np.ones(len(e)) if weights is None else np.asarray(weights, dtype=np.float64)
        return cls(n, _symmetric_from_pairs(n, e[:, 0], e[:, 1], w))

    @property
    def num_edges(self) -> int:
        """Undirected edge count, self-loops excluded."""
        off = self.adj.nnz - int(np.count_nonzero(self.adj.diagonal()))
        return off // 2

    def edge_array(self, include_self_loops: bool = False) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Directed (row, col, weight) triplets in CSR order."""
        coo = self.adj.tocoo()
        keep = np.ones(coo.nnz, dtype=bool) if include_self_loops else coo.row != coo.col
        return coo.row[keep], coo.col[keep], coo.data[keep]

    def degrees(self) -> np.ndarray:
        return np.asarray(self.adj.sum(axis=1)).ravel()


@dataclass(frozen=True)
class NormalizedAdjacency:
    matrix: sp.csr_matrix = field(repr=False)
    kind: str
    self_loops_added: bool = True

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)
    train: np.ndarray = field(repr=False)
    val: np.ndarray = field(repr=False)
    test: np.ndarray = field(repr=False)

    def __post_init__(self):
        n = self.features.shape[0]
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.shape != (n,):
            raise InputError(f"expected {n} labels, got shape {labels.shape}")
        if labels.size and labels.min() < 0:
            raise InputError("labels must be non-negative")
        object.__setattr__(self, "labels", labels)
        c = self.num_classes
        missing = np.setdiff1d(np.arange(c), labels)
        if missing.size:
            raise InputError(f"classes {missing.tolist()} never appear in labels")
        seen = np.zeros(n, dtype=bool)
        for name in ("train", "val", "test"):
            idx = np.asarray(getattr(self, name), dtype=np.int64)
            object.__setattr__(self, name, idx)
            if idx.size and (idx.min() < 0 or idx.max() >= n):
                raise InputError(f"{name} split has indices outside [0, {n})")
            if np.unique(idx).size != idx.size or seen[idx].any():
                raise InputError(f"{name} split overlaps another split or repeats nodes")
            seen[idx] = True

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    def split(self, name: str) -> np.ndarray:
        if name not in ("train", "val", "test"):
            raise InputError(f"unknown split {name!r}")
        return getattr(self, name)

    def with_features(self, features: np.ndarray) -> "LabeledDataset":
        return LabeledDataset(features, self.labels, self.train, self.val, self.test)

    def with_splits(self, train, val, test) -> "LabeledDataset":
        return LabeledDataset(self.features, self.labels, train, val, test)


def _symmetric_from_pairs(n, rows, cols, weights) -> sp.csr_matrix:
    # merge on the canonical (min, max) pair first, then mirror, so both
    # stored orientations carry the bitwise-same summed weight
    lo, hi = np.minimum(rows, cols), np.maximum(rows, cols)
    upper = sp.coo_matrix((np.asarray(weights, dtype=np.float64), (lo, hi)), shape=(n, n)).tocsr()
    upper.sum_duplicates()
    off = sp.triu(upper, k=1, format="csr")
    return _canonical_csr(upper + off.T)


def load_graph(source: TextIO | Iterable[str], n: int) -> Graph:
    """Parse a tab-separated edge list ``i<TAB>j[<TAB>w]``.

    Both orientations of a pair feed the same undirected edge, so ``0 1`` and
    ``1 0`` merge into one edge of weight 2. Input self-loops are kept.
    """
    rows, cols, ws = [], [], []
    for lineno, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t") if "\t" in line else line.split()
        if len(parts) not in (2, 3):
            raise InputError(f"line {lineno}: expected 2 or 3 columns, got {len(parts)}")
        try:
            i, j = int(parts[0]), int(parts[1])
            w = float(parts[2]) if len(parts) == 3 else 1.0
        except ValueError as exc:
            raise InputError(f"line {lineno}: {exc}") from None
        if not (0 <= i < n and 0 <= j < n):
            raise InputError(f"line {lineno}: node index out of range [0, {n}): {i}, {j}")
        if not np.isfinite(w):
            raise InputError(f"line {lineno}: non-finite weight {parts[2]!r}")
        if w < 0:
            raise InputError(f"line {lineno}: negative weight {w}")
        rows.append(i)
        cols.append(j)
        ws.append(w)
    adj = _symmetric_from_pairs(
        n, np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64), np.asarray(ws, dtype=np.float64)
    )
    return Graph(n, adj)


def serialize_graph(g: Graph) -> str:
    """Inverse of ``load_graph``: one line per undirected edge (i <= j)."""
    coo = sp.triu(g.adj).tocoo()
    order = np.lexsort((coo.col, coo.row))
    weighted = not np.all(coo.data == 1.0)
    lines = []
    for k in order:
        i, j, w = int(coo.row[k]), int(coo.col[k]), float(coo.data[k])
        lines.append(f"{i}\t{j}\t{w!r}" if weighted else f"{i}\t{j}")
    return "".join(line + "\n" for line in lines)


def add_self_loops(g: Graph) -> Graph:
    """A + I. Existing (i, i) entries are incremented by one."""
    adj = g.adj + sp.identity(g.n, format="csr", dtype=np.float64)
    return Graph(g.n, adj, self_loops_added=True)


def normalize(g: Graph, kind: NormKind = "symmetric") -> NormalizedAdjacency:
    """Renormalized adjacency, D^-1/2 Ã D^-1/2 or D^-1 Ã."""
    if kind not in NORM_KINDS:
        raise InputError(f"unknown normalization kind {kind!r}")
    if not g.self_loops_added:
        g = add_self_loops(g)
    a = g.adj.tocoo()
    deg = g.degrees()
    if kind == "symmetric":
        dinv = 1.0 / np.sqrt(deg)
        data = a.data * dinv[a.row] * dinv[a.col]
    else:
        data = a.data / deg[a.row]
    m = sp.csr_matrix((data, (a.row, a.col)), shape=a.shape)
    m.sort_indices()
    return NormalizedAdjacency(m, kind, True)


def laplacian(na: NormalizedAdjacency) -> sp.csr_matrix:
    """I - normalized adjacency, on the same sparsity pattern."""
    m = na.matrix.tocoo()
    data = -m.data.copy()
    diag = m.row == m.col
    data[diag] = 1.0 - m.data[diag]
    # rows without a stored diagonal still need the identity term
    has_diag = np.zeros(na.n, dtype=bool)
    has_diag[m.row[diag]] = True
    extra = np.flatnonzero(~has_diag)
    rows = np.concatenate([m.row, extra])
    cols = np.concatenate([m.col, extra])
    data = np.concatenate([data, np.ones(extra.size)])
    out = sp.csr_matrix((data, (rows, cols)), shape=m.shape)
    out.sort_indices()
    return out


def row_normalize_features(x: np.ndarray) -> np.ndarray:
    """Scale each nonzero row to unit L1 norm; zero rows pass through."""
    x = np.asarray(x, dtype=np.float64)
    norms = np.abs(x).sum(axis=1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    return x / safe
