"""Truncated diffusion series and the theory checks built on it.

The series is F = 1/(lam+1) * sum_{k=k0..K} (lam/(lam+1))^k T^k X. It is
accumulated with one operator product per order; T^k is never formed.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from . import rng
from .errors import CapacityError, DomainError, InputError, NumericError
from .graph import NORM_KINDS, Graph, NormalizedAdjacency, laplacian, normalize
from .transition import (
    DENSE_CAP,
    TransitionMatrix,
    TransitionOption,
    compute_phi,
    phi_option2,
    reconstruct_option4,
    build_transition,
)

ORACLE_CAP = 2_000


@dataclass(frozen=True)
class DiffusionConfig:
    lam: float = 32.0
    K: int = 16
    epsilon: float = 0.0
    option: TransitionOption = TransitionOption.PLAIN
    kind: str = "symmetric"
    drop_low_order: bool = False

    def __post_init__(self):
        object.__setattr__(self, "option", TransitionOption.parse(self.option))
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise InputError(f"lambda must be a finite positive number, got {self.lam}")
        if int(self.K) != self.K or self.K < 0:
            raise InputError(f"K must be a non-negative integer, got {self.K}")
        object.__setattr__(self, "K", int(self.K))
        if not self.epsilon >= 0:
            raise InputError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.kind not in NORM_KINDS:
            raise InputError(f"unknown normalization kind {self.kind!r}")
        if self.drop_low_order and self.K < 2:
            raise InputError("drop_low_order needs K >= 2")

    @property
    def ratio(self) -> float:
        """lam / (lam + 1)."""
        return self.lam / (self.lam + 1.0)

    @property
    def alpha(self) -> float:
        return 1.0 / (self.lam + 1.0)

    @property
    def first_order(self) -> int:
        return 2 if self.drop_low_order else 0

    @property
    def beta(self) -> float:
        return row_sum_constant(self.lam, self.K)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["option"] = self.option.value
        return d


@dataclass
class DiffusionReport:
    beta: float
    tau: float | None = None
    tau_per_node: list | None = None
    residual_norm: float | None = None
    noise_bound: float | None = None
    empirical_norms: list | None = None

    def to_dict(self, include_per_node: bool = True) -> dict:
        out = {"beta": self.beta, "tau": self.tau}
        if include_per_node and self.tau_per_node is not None:
            out["tau_per_node"] = self.tau_per_node
        for key in ("residual_norm", "noise_bound", "empirical_norms"):
            if getattr(self, key) is not None:
                out[key] = getattr(self, key)
        return out


def row_sum_constant(lam: float, K: int) -> float:
    """beta = 1 - (lam/(lam+1))^(K+1)."""
    return 1.0 - (lam / (lam + 1.0)) ** (K + 1)


def build_for_config(g: Graph, x: np.ndarray, cfg: DiffusionConfig, dense_cap: int = DENSE_CAP) -> TransitionMatrix:
    """Assemble the transition matrix the config asks for."""
    if cfg.option is TransitionOption.IV:
        return reconstruct_option4(g, x, kind=cfg.kind)
    na = normalize(g, cfg.kind)
    if cfg.option is TransitionOption.PLAIN:
        return build_transition(na, None, 0.0, cfg.option)
    return build_transition(na, compute_phi(cfg.option, g, x, dense_cap), cfg.epsilon, cfg.option)


def diffuse_features(t: TransitionMatrix, x: np.ndarray, cfg: DiffusionConfig) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != t.n:
        raise InputError(f"feature matrix has {x.shape[0]} rows, transition is {t.n}x{t.n}")
    if t.option is not cfg.option:
        raise InputError(f"config option {cfg.option.name} does not match transition option {t.option.name}")
    a = cfg.ratio
    k0 = cfg.first_order
    power = x
    acc = x.copy() if k0 == 0 else np.zeros_like(x)
    for k in range(1, cfg.K + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            power = a * (t.op @ power)
        if not np.all(np.isfinite(power)):
            raise NumericError(f"non-finite values at diffusion order k={k}")
        if k >= k0:
            acc += power
    return acc / (cfg.lam + 1.0)


def materialize_S(t: TransitionMatrix, cfg: DiffusionConfig, cap: int = ORACLE_CAP) -> np.ndarray:
    """Dense S via explicit dense powers (independent of the vector path)."""
    n = t.n
    if n > cap:
        raise CapacityError(f"materializing S needs a dense {n}x{n} matrix (cap {cap})")
    tm = t.toarray()
    a = cfg.ratio
    term = np.eye(n)
    s = term.copy() if cfg.first_order == 0 else np.zeros((n, n))
    for k in range(1, cfg.K + 1):
        term = a * (tm @ term)
        if k >= cfg.first_order:
            s += term
    if not np.all(np.isfinite(s)):
        raise NumericError("non-finite entries in materialized S")
    return s / (cfg.lam + 1.0)


def closed_form_oracle(na: NormalizedAdjacency, x: np.ndarray, lam: float, epsilon: float,
                       phi=None, cap: int = ORACLE_CAP) -> np.ndarray:
    """Solve (I + lam*L + lam*eps*Phi) F = X densely.

    ``phi`` defaults to the scaled Gram matrix of X (the X-substituted
    inner maximizer).
    """
    x = np.asarray(x, dtype=np.float64)
    n = na.n
    if n > cap:
        raise CapacityError(f"dense oracle limited to n <= {cap}, got {n}")
    system = np.eye(n) + lam * laplacian(na).toarray()
    if epsilon:
        p = phi_option2(x) if phi is None else phi
        p = p.toarray() if sp.issparse(p) else np.asarray(p)
        system += lam * epsilon * p
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu, piv = scipy.linalg.lu_factor(system, check_finite=True)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise NumericError(f"oracle factorization failed: {exc}") from None
    if np.min(np.abs(np.diag(lu))) <= np.finfo(float).eps * n * np.max(np.abs(np.diag(lu))):
        smin = np.linalg.svd(system, compute_uv=False)[-1]
        raise NumericError(f"oracle system is singular (smallest singular value {smin:.3e})")
    return scipy.linalg.lu_solve((lu, piv), x)


def residual_norm(f: np.ndarray, t: TransitionMatrix, x: np.ndarray, cfg: DiffusionConfig) -> float:
    """||F - series(T) X||_F for a fixed transition matrix."""
    return float(np.linalg.norm(np.asarray(f) - diffuse_features(t, x, cfg)))


def consistency_residual(f: np.ndarray, g: Graph, x: np.ndarray, cfg: DiffusionConfig,
                         dense_cap: int = DENSE_CAP) -> float:
    """Residual of the self-consistent equation with Phi rebuilt from F itself.

    This is the error-matrix norm used to judge how well the X-substituted
    solution satisfies the equation whose transition depends on F.
    """
    f = np.asarray(f, dtype=np.float64)
    if cfg.option in (TransitionOption.PLAIN, TransitionOption.IV):
        t = build_for_config(g, x, cfg, dense_cap)
    else:
        na = normalize(g, cfg.kind)
        t = build_transition(na, compute_phi(cfg.option, g, f, dense_cap), cfg.epsilon, cfg.option)
    return residual_norm(f, t, x, cfg)


def connectivity_factor(s: np.ndarray) -> tuple[float, np.ndarray]:
    """tau_i = n * sum_j s_ij^2 / (sum_j s_ij)^2 and tau = max_i tau_i."""
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise InputError(f"expected a square matrix, got shape {s.shape}")
    if (s < 0).any():
        raise DomainError("connectivity factor is only defined for non-negative S (use epsilon=0)")
    n = s.shape[0]
    sums = s.sum(axis=1)
    if (sums == 0).any():
        raise DomainError(f"rows {np.flatnonzero(sums == 0).tolist()[:10]} of S sum to zero")
    per_node = n * (s * s).sum(axis=1) / (sums * sums)
    return float(per_node.max()), per_node


def noise_bound(n: int, d: int, tau: float, lam: float, K: int, sigma: float) -> float:
    """2 tau beta^2 sigma^2 (4 log n + log 2d) / n."""
    for name, v in (("n", n), ("d", d), ("tau", tau), ("lam", lam), ("sigma", sigma)):
        if not v > 0:
            raise InputError(f"{name} must be positive, got {v}")
    beta = row_sum_constant(lam, K)
    return 2.0 * tau * beta**2 * sigma**2 * (4.0 * math.log(n) + math.log(2.0 * d)) / n


def empirical_noise_norm(t: TransitionMatrix, cfg: DiffusionConfig, sigma: float, trials: int, seed: int,
                         d: int = 10, statistic: str = "frobenius") -> np.ndarray:
    """Per-trial ||S Y||_F^2 (or max_ij (S Y)_ij^2) with Y iid N(0, sigma^2), n x d.

    Trial r draws from its own stream, so results do not depend on the order
    trials are evaluated in.
    """
    if statistic not in ("frobenius", "max_entry"):
        raise InputError(f"unknown statistic {statistic!r}")
    s = materialize_S(t, cfg) if t.n <= ORACLE_CAP else None
    out = np.empty(trials)
    for r in range(trials):
        noise = sigma * rng.stream(seed, rng.TRIAL, r).standard_normal((t.n, d))
        sy = s @ noise if s is not None else diffuse_features(t, noise, cfg)
        out[r] = float(np.sum(sy * sy)) if statistic == "frobenius" else float(np.max(sy * sy))
    return out


def diffusion_report(t: TransitionMatrix, cfg: DiffusionConfig, cap: int = ORACLE_CAP) -> DiffusionReport:
    """beta always; tau when S is small enough to materialize and non-negative."""
    report = DiffusionReport(beta=cfg.beta)
    if t.n <= cap:
        s = materialize_S(t, cfg, cap)
        if (s >= 0).all() and (s.sum(axis=1) > 0).all():
            tau, per_node = connectivity_factor(s)
            report.tau = tau
            report.tau_per_node = per_node.tolist()
    return report
