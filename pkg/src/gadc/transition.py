"""Modified transition matrices T = A_norm - eps * Phi.

Options I and III are edge-masked (self-loop positions excluded from Phi),
option II is the dense scaled Gram matrix, and option IV replaces the
adjacency weights by clamped cosine similarities and renormalizes.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import CapacityError, InputError
from .graph import Graph, NormalizedAdjacency

DENSE_CAP = 50_000
_CHUNK = 1 << 16


class TransitionOption(enum.Enum):
    PLAIN = "plain"
    I = "1"
    II = "2"
    III = "3"
    IV = "4"

    @classmethod
    def parse(cls, value) -> "TransitionOption":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"0": "plain", "option1": "1", "option2": "2", "option3": "3", "option4": "4",
                   "i": "1", "ii": "2", "iii": "3", "iv": "4"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise InputError(f"unknown transition option {value!r}") from None


@dataclass(frozen=True)
class TransitionMatrix:
    op: sp.csr_matrix | np.ndarray = field(repr=False)
    option: TransitionOption
    epsilon: float
    base_kind: str

    @property
    def dense(self) -> bool:
        return isinstance(self.op, np.ndarray)

    @property
    def n(self) -> int:
        return self.op.shape[0]

    def toarray(self) -> np.ndarray:
        return self.op if self.dense else self.op.toarray()


def _check_rows(g: Graph, x: np.ndarray):
    if x.shape[0] != g.n:
        raise InputError(f"feature matrix has {x.shape[0]} rows, graph has {g.n} nodes")


def _edge_dots(x, rows, cols):
    out = np.empty(rows.size)
    for s in range(0, rows.size, _CHUNK):
        r, c = rows[s:s + _CHUNK], cols[s:s + _CHUNK]
        out[s:s + _CHUNK] = np.einsum("ij,ij->i", x[r], x[c])
    return out


def _cosines(x, rows, cols):
    norms = np.linalg.norm(x, axis=1)
    denom = norms[rows] * norms[cols]
    dots = _edge_dots(x, rows, cols)
    ok = denom > 0
    cos = np.zeros(rows.size)
    cos[ok] = dots[ok] / denom[ok]
    # rounding can push parallel vectors a hair past 1
    return np.clip(cos, -1.0, 1.0)


def gram_frobenius(x: np.ndarray) -> float:
    """||X X^T||_F computed as ||X^T X||_F (same value, d x d work)."""
    x = np.asarray(x, dtype=np.float64)
    return float(np.linalg.norm(x.T @ x))


def phi_option1(g: Graph, x: np.ndarray) -> sp.csr_matrix:
    """Edge cosine similarities; zero-norm endpoints give 0."""
    x = np.asarray(x, dtype=np.float64)
    _check_rows(g, x)
    rows, cols, _ = g.edge_array()
    vals = _cosines(x, rows, cols)
    m = sp.csr_matrix((vals, (rows, cols)), shape=(g.n, g.n))
    m.sort_indices()
    return m


def phi_option2(x: np.ndarray, dense_cap: int = DENSE_CAP) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if n > dense_cap:
        raise CapacityError(
            f"option II needs a dense {n}x{n} matrix (cap {dense_cap}); use option III for large graphs"
        )
    scale = gram_frobenius(x)
    if scale == 0:
        return np.zeros((n, n))
    return (x @ x.T) / scale


def phi_option3(g: Graph, x: np.ndarray) -> sp.csr_matrix:
    """Option II values restricted to edges; the scale uses the full Gram norm."""
    x = np.asarray(x, dtype=np.float64)
    _check_rows(g, x)
    rows, cols, _ = g.edge_array()
    scale = gram_frobenius(x)
    vals = _edge_dots(x, rows, cols) / scale if scale > 0 else np.zeros(rows.size)
    m = sp.csr_matrix((vals, (rows, cols)), shape=(g.n, g.n))
    m.sort_indices()
    return m


def compute_phi(option: TransitionOption, g: Graph, x: np.ndarray, dense_cap: int = DENSE_CAP):
    option = TransitionOption.parse(option)
    if option is TransitionOption.I:
        return phi_option1(g, x)
    if option is TransitionOption.II:
        return phi_option2(x, dense_cap)
    if option is TransitionOption.III:
        return phi_option3(g, x)
    if option is TransitionOption.PLAIN:
        return None
    raise InputError("option IV has no Phi term; use reconstruct_option4")


def build_transition(na: NormalizedAdjacency, phi, epsilon: float, option) -> TransitionMatrix:
    option = TransitionOption.parse(option)
    epsilon = float(epsilon)
    if epsilon < 0 or not math.isfinite(epsilon):
        raise InputError(f"epsilon must be finite and >= 0, got {epsilon}")
    if option is TransitionOption.IV:
        raise InputError("option IV is built by reconstruct_option4")
    if option is TransitionOption.PLAIN:
        return TransitionMatrix(na.matrix, option, 0.0, na.kind)
    if phi is None:
        raise InputError(f"option {option.name} needs a Phi matrix")
    if phi.shape != na.matrix.shape:
        raise InputError(f"Phi shape {phi.shape} does not match adjacency {na.matrix.shape}")
    if option is TransitionOption.II:
        op = na.matrix.toarray() - epsilon * np.asarray(phi)
    else:
        op = sp.csr_matrix(na.matrix - epsilon * sp.csr_matrix(phi))
        op.sort_indices()
    return TransitionMatrix(op, option, epsilon, na.kind)


def reconstruct_option4(g_perturbed: Graph, x: np.ndarray, kind: str = "symmetric") -> TransitionMatrix:
    """Rebuild edge weights from feature cosines, then renormalize.

    Negative cosines are clamped to zero (the edge stays in the pattern with
    weight 0), every node keeps a self-loop of weight 1.
    """
    x = np.asarray(x, dtype=np.float64)
    _check_rows(g_perturbed, x)
    n = g_perturbed.n
    rows, cols, _ = g_perturbed.edge_array()
    w = np.maximum(_cosines(x, rows, cols), 0.0)
    diag = np.arange(n)
    rows = np.concatenate([rows, diag])
    cols = np.concatenate([cols, diag])
    w = np.concatenate([w, np.ones(n)])
    deg = np.bincount(rows, weights=w, minlength=n)
    if kind == "symmetric":
        dinv = 1.0 / np.sqrt(deg)
        data = w * dinv[rows] * dinv[cols]
    elif kind == "row_stochastic":
        data = w / deg[rows]
    else:
        raise InputError(f"unknown normalization kind {kind!r}")
    op = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
    op.sort_indices()
    return TransitionMatrix(op, TransitionOption.IV, math.inf, kind)


def raw_cosine_matrix(g: Graph, x: np.ndarray) -> sp.csr_matrix:
    """Unclamped, unnormalized option-IV weights (self-loops = 1), for inspection."""
    x = np.asarray(x, dtype=np.float64)
    rows, cols, _ = g.edge_array()
    w = _cosines(x, rows, cols)
    diag = np.arange(g.n)
    m = sp.csr_matrix(
        (np.concatenate([w, np.ones(g.n)]), (np.concatenate([rows, diag]), np.concatenate([cols, diag]))),
        shape=(g.n, g.n),
    )
    m.sort_indices()
    return m
