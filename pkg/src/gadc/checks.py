"""Executable theory and ordering checks.

Each check returns a ``CheckResult`` with the observed quantity next to the
expectation it was held to. ``gadc verify`` and the acceptance tests run the
same functions.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import experiments as ex
from .diffusion import (
    DiffusionConfig,
    build_for_config,
    closed_form_oracle,
    connectivity_factor,
    consistency_residual,
    diffuse_features,
    empirical_noise_norm,
    materialize_S,
    noise_bound,
    row_sum_constant,
)
from .graph import Graph, normalize, row_normalize_features
from .model import HeadConfig, gradient_check
from .perturb import SbmSpec, erdos_renyi, generate_gallery, generate_sbm
from . import rng

DENOISE_SBM = {"n": 1000, "blocks": 2, "p_in": 0.02, "p_out": 0.002, "d": 32, "feature_separation": 0.5}
DENOISE_HEAD = {"kind": "linear", "lr": 0.2, "epochs": 100, "weight_decay": 1e-5}
ATTACK_HEAD = {"kind": "mlp2", "hidden": 32, "dropout": 0.5, "lr": 0.02, "epochs": 100, "weight_decay": 1e-5}


@dataclass
class CheckResult:
    name: str
    passed: bool
    observed: dict
    expected: str
    elapsed_s: float = 0.0
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        obs = ", ".join(f"{k}={_fmt(v)}" for k, v in self.observed.items())
        return f"[{status}] {self.name}: {obs} (expected {self.expected}; {self.elapsed_s:.2f}s)"

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "observed": self.observed,
                "expected": self.expected, "elapsed_s": self.elapsed_s, "details": self.details}


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.elapsed_s = time.perf_counter() - t0
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def random_graph(n: int, seed: int, p: float | None = None) -> Graph:
    """Erdos-Renyi graph; p defaults to a mean degree of about 4."""
    return erdos_renyi(n, p if p is not None else min(1.0, 4.0 / max(n - 1, 1)), seed)


# ---------------------------------------------------------------- theory

@_timed
def row_sum_lemma(graphs: int = 50, max_n: int = 200, lams=(1.0, 32.0), Ks=(0, 1, 16), seed: int = 0,
                  tol: float = 1e-9) -> CheckResult:
    worst = 0.0
    for gi in range(graphs):
        gen = rng.stream(seed, rng.GRAPH, gi)
        n = int(gen.integers(2, max_n + 1))
        g = random_graph(n, seed * 1000 + gi, p=float(gen.uniform(0.0, 0.2)))
        for lam in lams:
            for K in Ks:
                cfg = DiffusionConfig(lam=lam, K=K, kind="row_stochastic")
                s = materialize_S(build_for_config(g, None, cfg), cfg)
                worst = max(worst, float(np.max(np.abs(s.sum(axis=1) - row_sum_constant(lam, K)))))
    return CheckResult("row_sum_lemma", worst < tol, {"max_abs_dev": worst, "graphs": graphs},
                       f"every row sum within {tol:g} of 1-(lam/(lam+1))^(K+1)")


@_timed
def row_square_range(graphs: int = 10, n: int = 60, seed: int = 0) -> CheckResult:
    """beta^2/n <= sum_j S_ij^2 <= beta^2 for nonnegative row-stochastic S."""
    ok = True
    worst_low = worst_high = math.inf
    for gi in range(graphs):
        g = random_graph(n, seed * 1000 + gi, p=0.05 + 0.02 * gi)
        cfg = DiffusionConfig(lam=32.0, K=16, kind="row_stochastic")
        s = materialize_S(build_for_config(g, None, cfg), cfg)
        sq = (s * s).sum(axis=1)
        b2 = cfg.beta**2
        worst_low = min(worst_low, float(np.min(sq - b2 / n)))
        worst_high = min(worst_high, float(np.min(b2 - sq)))
        ok &= bool(np.all(sq >= b2 / n * (1 - 1e-12)) and np.all(sq <= b2 * (1 + 1e-12)))
    return CheckResult("row_square_range", ok, {"min_margin_low": worst_low, "min_margin_high": worst_high},
                       "beta^2/n <= row sum of squares <= beta^2")


def gallery_tau(which: str, lam: float = 32.0, K: int = 32) -> tuple[float, np.ndarray]:
    g = generate_gallery(which)
    cfg = DiffusionConfig(lam=lam, K=K, kind="row_stochastic")
    return connectivity_factor(materialize_S(build_for_config(g, None, cfg), cfg))


@_timed
def tau_complete(lam: float = 32.0, K: int = 32, tol: float = 1e-9) -> CheckResult:
    tau, _ = gallery_tau("complete4", lam, K)
    return CheckResult("tau_complete_graph", abs(tau - 1.0) <= tol, {"tau": tau}, f"tau = 1 +/- {tol:g}")


@_timed
def tau_isolated(lam: float = 32.0, K: int = 32) -> CheckResult:
    tau, _ = gallery_tau("isolated", lam, K)
    return CheckResult("tau_isolated_graph", tau == 4.0, {"tau": tau}, "tau = n = 4 exactly")


@_timed
def tau_ordering(lam: float = 32.0, K: int = 32) -> CheckResult:
    taus = {w: gallery_tau(w, lam, K)[0] for w in ("isolated", "star4", "complete4", "decentralized12")}
    ok = taus["isolated"] > taus["star4"] > taus["complete4"]
    return CheckResult("tau_gallery_ordering", ok, taus, "tau(isolated) > tau(star4) > tau(complete4)")


def oracle_errors(graphs: int = 5, n: int = 30, lam: float = 1.0, Ks=(4, 16, 64, 256, 500), seed: int = 0,
                  d: int = 4) -> np.ndarray:
    """Relative Frobenius error of the truncated series against the dense solve, per graph and K."""
    out = np.zeros((graphs, len(Ks)))
    for gi in range(graphs):
        g = random_graph(n, seed * 1000 + gi, p=0.15)
        x = rng.stream(seed, rng.FEATURES, gi).standard_normal((n, d))
        na = normalize(g, "symmetric")
        exact = closed_form_oracle(na, x, lam, 0.0)
        for ki, K in enumerate(Ks):
            cfg = DiffusionConfig(lam=lam, K=K)
            f = diffuse_features(build_for_config(g, x, cfg), x, cfg)
            out[gi, ki] = np.linalg.norm(f - exact) / np.linalg.norm(exact)
    return out


@_timed
def oracle_equivalence(graphs: int = 5, seed: int = 0, tol: float = 1e-8) -> CheckResult:
    Ks = (4, 16, 64, 256, 500)
    err = oracle_errors(graphs, Ks=Ks, seed=seed)
    final = float(err[:, -1].max())
    decreasing = bool(np.all(np.diff(err[:, :4], axis=1) < 0))
    obs = {"max_rel_err_K500": final, "decreasing_K4_to_K256": decreasing}
    obs.update({f"max_rel_err_K{K}": float(err[:, i].max()) for i, K in enumerate(Ks[:4])})
    return CheckResult("oracle_equivalence", final < tol and decreasing, obs,
                       f"rel err at K=500 < {tol:g}; strictly decreasing over K in (4,16,64,256)")


@_timed
def truncation_tail(graphs: int = 5, n: int = 30, lam: float = 1.0, Ks=(4, 16, 64, 256), seed: int = 0,
                    d: int = 4) -> CheckResult:
    """Truncation error via F_inf - F_K = (a T)^(K+1) F_inf, with no cancellation.

    The subtraction in ``oracle_errors`` bottoms out at rounding level once
    a^(K+1) drops below machine epsilon; the tail itself stays representable.
    """
    worst = np.zeros(len(Ks))
    decreasing = True
    for gi in range(graphs):
        g = random_graph(n, seed * 1000 + gi, p=0.15)
        x = rng.stream(seed, rng.FEATURES, gi).standard_normal((n, d))
        na = normalize(g, "symmetric")
        exact = closed_form_oracle(na, x, lam, 0.0)
        a = lam / (lam + 1.0)
        errs = []
        power, done = exact, 0
        for K in Ks:
            while done < K + 1:
                power = a * (na.matrix @ power)
                done += 1
            errs.append(np.linalg.norm(power) / np.linalg.norm(exact))
        errs = np.array(errs)
        decreasing &= bool(np.all(np.diff(errs) < 0))
        worst = np.maximum(worst, errs)
    obs = {f"max_tail_K{K}": float(e) for K, e in zip(Ks, worst)}
    obs["decreasing"] = decreasing
    return CheckResult("truncation_tail", decreasing, obs, "tail norm strictly decreasing in K")


def noise_bound_setup(n: int = 200, lam: float = 32.0, K: int = 16, seed: int = 0, p: float = 0.05):
    g = random_graph(n, seed, p=p)
    cfg = DiffusionConfig(lam=lam, K=K, kind="row_stochastic")
    t = build_for_config(g, None, cfg)
    tau, _ = connectivity_factor(materialize_S(t, cfg))
    return g, t, cfg, tau


@_timed
def noise_bound_monte_carlo(n: int = 200, lam: float = 32.0, K: int = 16, sigma: float = 1.0, d: int = 10,
                         trials: int = 1000, seed: int = 0, statistic: str = "frobenius") -> CheckResult:
    """Fraction of trials exceeding the high-probability bound, vs 1/d + 0.02.

    ``statistic="frobenius"`` tests the bound as stated, on ||S Y||_F^2.
    ``statistic="max_entry"`` tests it on max_ij (S Y)_ij^2, which is the
    quantity the union-bound argument actually controls.
    """
    _, t, cfg, tau = noise_bound_setup(n, lam, K, seed)
    bound = noise_bound(n, d, tau, lam, K, sigma)
    norms = empirical_noise_norm(t, cfg, sigma, trials, seed, d=d, statistic=statistic)
    frac = float(np.mean(norms > bound))
    limit = 1.0 / d + 0.02
    name = "noise_bound_frobenius" if statistic == "frobenius" else "noise_bound_max_entry"
    return CheckResult(name, frac <= limit,
                       {"violation_fraction": frac, "bound": bound, "mean_statistic": float(norms.mean()),
                        "tau": tau, "trials": trials},
                       f"violation fraction <= {limit:.2f}")


@_timed
def noise_contraction(trials: int = 100, seed: int = 0, sigma: float = 1.0) -> CheckResult:
    """||S Y||_F < ||Y||_F / 3 on every trial, on the denoising SBM with eps=0."""
    g, ds = generate_sbm(SbmSpec(seed=seed, **DENOISE_SBM))
    cfg = DiffusionConfig(lam=32.0, K=16, kind="row_stochastic")
    t = build_for_config(g, None, cfg)
    d = ds.features.shape[1]
    ratios = []
    for r in range(trials):
        y = sigma * rng.stream(seed, rng.TRIAL, r).standard_normal((g.n, d))
        ratios.append(np.linalg.norm(diffuse_features(t, y, cfg)) / np.linalg.norm(y))
    worst = float(max(ratios))
    return CheckResult("noise_contraction", worst < 1 / 3, {"max_ratio": worst, "trials": trials},
                       "||S Y||_F / ||Y||_F < 1/3 on every trial")


@_timed
def sbm_noise_bound(trials: int = 100, seed: int = 0, sigma: float = 1.0) -> CheckResult:
    """Bound as stated on the denoising SBM (eps=0, row-stochastic S)."""
    g, ds = generate_sbm(SbmSpec(seed=seed, **DENOISE_SBM))
    cfg = DiffusionConfig(lam=32.0, K=16, kind="row_stochastic")
    t = build_for_config(g, None, cfg)
    tau, _ = connectivity_factor(materialize_S(t, cfg))
    d = ds.features.shape[1]
    bound = noise_bound(g.n, d, tau, cfg.lam, cfg.K, sigma)
    norms = empirical_noise_norm(t, cfg, sigma, trials, seed, d=d)
    frac = float(np.mean(norms > bound))
    limit = 1.0 / d + 0.02
    return CheckResult("sbm_noise_bound", frac <= limit,
                       {"violation_fraction": frac, "sqrt_bound": math.sqrt(bound),
                        "mean_norm": float(np.sqrt(norms).mean()), "tau": tau},
                       f"||S Y||_F <= sqrt(bound) in all but {limit:.2f} of trials")


@_timed
def gradients(kind: str, trials: int = 10, tol: float = 1e-5, seed: int = 0) -> CheckResult:
    rep = gradient_check(HeadConfig(kind=kind, hidden=8), trials=trials, tolerance=tol, seed=seed)
    return CheckResult(f"gradient_check_{kind}", rep["passed"], {"max_rel_diff": rep["max_rel_diff"]},
                       f"max relative deviation < {tol:g}")


@_timed
def series_properties(seed: int = 0) -> CheckResult:
    """Linearity, symmetry of S, and the drop-low-order identity."""
    g = random_graph(40, seed, p=0.1)
    gen = rng.stream(seed, rng.FEATURES)
    x1, x2 = gen.standard_normal((40, 3)), gen.standard_normal((40, 3))
    cfg = DiffusionConfig(lam=4.0, K=12)
    t = build_for_config(g, x1, cfg)
    lhs = diffuse_features(t, 2.0 * x1 - 3.0 * x2, cfg)
    rhs = 2.0 * diffuse_features(t, x1, cfg) - 3.0 * diffuse_features(t, x2, cfg)
    lin = float(np.linalg.norm(lhs - rhs) / np.linalg.norm(rhs))
    s = materialize_S(t, cfg)
    asym = float(np.max(np.abs(s - s.T)))
    dropped = DiffusionConfig(lam=4.0, K=12, drop_low_order=True)
    full = diffuse_features(t, x1, cfg)
    low = (x1 + cfg.ratio * (t.op @ x1)) / (cfg.lam + 1.0)
    drop_gap = float(np.linalg.norm(full - low - diffuse_features(t, x1, dropped)) / np.linalg.norm(full))
    ok = lin < 1e-10 and asym < 1e-10 and drop_gap < 1e-10
    return CheckResult("series_properties", ok, {"linearity": lin, "asymmetry": asym, "drop_low_order": drop_gap},
                       "all < 1e-10")


@_timed
def residual_ordering(n: int = 100, seed: int = 0, ratio: float = 50.0) -> CheckResult:
    """X-substituted solution vs a random F on the self-consistent equation."""
    g, ds = generate_sbm(SbmSpec(n=n, seed=seed, d=16, p_in=0.1, p_out=0.01))
    x = row_normalize_features(ds.features)
    cfg = DiffusionConfig(lam=32.0, K=16, epsilon=1.0, option="2")
    f = diffuse_features(build_for_config(g, x, cfg), x, cfg)
    approx = consistency_residual(f, g, x, cfg)
    rand_f = 1.0 + rng.stream(seed, rng.TRIAL).standard_normal(x.shape)
    random = consistency_residual(rand_f, g, x, cfg)
    return CheckResult("residual_ordering", approx * ratio < random,
                       {"approx_residual": approx, "random_residual": random},
                       f"approx residual < random residual / {ratio:g}")


# ---------------------------------------------------------------- benches

def denoise_config(runs: int = 10, seed: int = 0) -> ex.ExperimentConfig:
    return ex.ExperimentConfig(
        scenario="denoise", data={"sbm": dict(DENOISE_SBM)},
        diffusion={"lam": 32.0, "K": 16, "epsilon": 1.0, "option": "2", "kind": "symmetric"},
        head=dict(DENOISE_HEAD), noise={"kind": "gaussian", "level": 1.0}, runs=runs, seed=seed,
    )


def attack_config(runs: int = 10, seed: int = 0, rate: float = 0.5) -> ex.ExperimentConfig:
    return ex.ExperimentConfig(
        scenario="attack", data={"sbm": dict(DENOISE_SBM)},
        diffusion={"lam": 1.0, "K": 3, "kind": "symmetric"},
        head=dict(ATTACK_HEAD), perturbation={"rate": rate, "mode": "add_cross_class"}, runs=runs, seed=seed,
    )


@_timed
def denoise_ordering(runs: int = 10, seed: int = 0, min_wins: int = 8) -> CheckResult:
    cfg = denoise_config(runs, seed)
    g, ds = ex.load_dataset(cfg.data, seed)
    cells = {r.cell: r for r in ex.denoise_bench(cfg, g, ds)}
    gadc, base, ctrl = cells["gadc_II"], cells["no_diffusion"], cells["eps0"]
    wins_base = ex.paired_wins(gadc.accuracies, base.accuracies)
    wins_ctrl = ex.paired_wins(gadc.accuracies, ctrl.accuracies)
    ok = (gadc.mean > base.mean and gadc.mean > ctrl.mean and wins_base >= min_wins and wins_ctrl >= min_wins)
    return CheckResult("denoise_ordering", ok,
                       {"mean_gadc_II": gadc.mean, "mean_no_diffusion": base.mean, "mean_eps0": ctrl.mean,
                        "wins_vs_no_diffusion": wins_base, "wins_vs_eps0": wins_ctrl},
                       f"GADC(II) mean above both, strict paired wins >= {min_wins}/{runs} each",
                       details={"accuracies": {k: v.accuracies for k, v in cells.items()}})


@_timed
def defense_ordering(runs: int = 10, seed: int = 0, min_wins: int = 8) -> CheckResult:
    cfg = attack_config(runs, seed)
    g, ds = ex.load_dataset(cfg.data, seed)
    cells = {r.cell: r for r in ex.attack_bench(cfg, g, ds)}
    iv, plain = cells["gadc_IV"], cells["plain"]
    wins = ex.paired_wins(iv.accuracies, plain.accuracies, strict=False)
    ok = iv.mean >= plain.mean and wins >= min_wins
    return CheckResult("defense_ordering", ok,
                       {"mean_gadc_IV": iv.mean, "mean_plain": plain.mean, "paired_wins": wins},
                       f"option IV mean >= plain mean, paired (>=) wins >= {min_wins}/{runs}",
                       details={"accuracies": {k: v.accuracies for k, v in cells.items()}})


# ---------------------------------------------------------------- suites

def suite(level: str = "fast", seed: int = 0) -> list:
    """The check list for ``gadc verify``."""
    full = level == "full"
    return [
        lambda: row_sum_lemma(graphs=50 if full else 10, seed=seed),
        lambda: row_square_range(seed=seed),
        lambda: tau_complete(),
        lambda: tau_isolated(),
        lambda: tau_ordering(),
        lambda: oracle_equivalence(graphs=5 if full else 2, seed=seed),
        lambda: truncation_tail(graphs=5 if full else 2, seed=seed),
        lambda: series_properties(seed=seed),
        lambda: residual_ordering(seed=seed),
        lambda: gradients("linear", trials=10 if full else 3, seed=seed),
        lambda: gradients("mlp2", trials=10 if full else 3, seed=seed),
        lambda: noise_bound_monte_carlo(trials=1000 if full else 200, seed=seed),
        lambda: noise_bound_monte_carlo(trials=1000 if full else 200, seed=seed, statistic="max_entry"),
        lambda: noise_contraction(trials=100 if full else 20, seed=seed),
        lambda: sbm_noise_bound(trials=100 if full else 20, seed=seed),
    ] + ([lambda: denoise_ordering(seed=seed), lambda: defense_ordering(seed=seed)] if full else [])
