import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

import oracles
from conftest import edge_lists, graphs_with_features
from gadc.diffusion import (
    DiffusionConfig,
    build_for_config,
    closed_form_oracle,
    connectivity_factor,
    consistency_residual,
    diffuse_features,
    diffusion_report,
    empirical_noise_norm,
    materialize_S,
    noise_bound,
    residual_norm,
    row_sum_constant,
)
from gadc.errors import CapacityError, DomainError, InputError, NumericError
from gadc.graph import Graph, normalize
from gadc.transition import TransitionMatrix, TransitionOption, build_transition, phi_option2

PATH3 = Graph.from_edges(3, [(0, 1), (1, 2)])


def identity_transition(n):
    return TransitionMatrix(sp.identity(n, format="csr"), TransitionOption.PLAIN, 0.0, "symmetric")


def random_graph(n, p, seed):
    rng = np.random.default_rng(seed)
    i, j = np.triu_indices(n, 1)
    keep = rng.random(i.size) < p
    return Graph.from_edges(n, list(zip(i[keep], j[keep]))), rng


@pytest.mark.parametrize("kw", [{"lam": 0}, {"lam": -1}, {"lam": math.inf}, {"K": -1}, {"K": 1.5},
                                {"epsilon": -0.1}, {"kind": "sym"}, {"K": 1, "drop_low_order": True},
                                {"option": "7"}])
def test_config_validation(kw):
    with pytest.raises(InputError):
        DiffusionConfig(**kw)


def test_config_derived_values():
    cfg = DiffusionConfig(lam=32, K=16)
    assert cfg.ratio == 32 / 33 and cfg.alpha == 1 / 33
    assert cfg.beta == 1 - (32 / 33) ** 17
    assert DiffusionConfig(K=4, drop_low_order=True).first_order == 2


def test_zeroth_order_only():
    x = np.arange(6.0).reshape(3, 2)
    cfg = DiffusionConfig(lam=3.0, K=0)
    f = diffuse_features(build_for_config(PATH3, x, cfg), x, cfg)
    assert np.array_equal(f, x / 4.0)


@pytest.mark.parametrize("lam,K", [(1.0, 0), (1.0, 5), (32.0, 16), (0.5, 40)])
def test_identity_transition_gives_beta(lam, K):
    x = np.random.default_rng(0).standard_normal((5, 3))
    cfg = DiffusionConfig(lam=lam, K=K)
    f = diffuse_features(identity_transition(5), x, cfg)
    assert np.allclose(f, row_sum_constant(lam, K) * x, rtol=1e-13, atol=1e-15)


def test_two_term_hand_expansion():
    x = np.array([[1.0], [0.0], [0.0]])
    cfg = DiffusionConfig(lam=1.0, K=1, kind="row_stochastic")
    f = diffuse_features(build_for_config(PATH3, x, cfg), x, cfg)
    assert f[1, 0] == pytest.approx(0.25 / 3, rel=1e-15)
    assert f[0, 0] == pytest.approx(0.5 + 0.25 * 0.5, rel=1e-15)


def test_option_mismatch_rejected():
    x = np.ones((3, 2))
    t = build_for_config(PATH3, x, DiffusionConfig())
    with pytest.raises(InputError, match="does not match"):
        diffuse_features(t, x, DiffusionConfig(option="1", epsilon=1.0))
    with pytest.raises(InputError, match="rows"):
        diffuse_features(t, np.ones((4, 2)), DiffusionConfig())


def test_overflow_names_the_order():
    x = np.ones((3, 2))
    na = normalize(PATH3)
    t = build_transition(na, phi_option2(x), 1e200, "2")
    with pytest.raises(NumericError, match="k=2"):
        diffuse_features(t, x, DiffusionConfig(option="2", epsilon=1e200, K=4))


def test_materialize_single_node():
    cfg = DiffusionConfig(lam=2.0, K=7)
    s = materialize_S(build_for_config(Graph.from_edges(1, []), None, cfg), cfg)
    assert s.shape == (1, 1) and s[0, 0] == pytest.approx(cfg.beta, rel=1e-15)


def test_materialize_capacity():
    with pytest.raises(CapacityError):
        materialize_S(identity_transition(5), DiffusionConfig(), cap=4)


def test_materialize_matches_vector_path():
    g, rng = random_graph(20, 0.2, 1)
    x = rng.standard_normal((20, 4))
    for opt, eps in (("plain", 0.0), ("1", 0.5), ("2", 1.0), ("3", 2.0), ("4", 0.0)):
        cfg = DiffusionConfig(lam=4.0, K=10, option=opt, epsilon=eps)
        t = build_for_config(g, x, cfg)
        f = diffuse_features(t, x, cfg)
        sx = materialize_S(t, cfg) @ x
        assert np.linalg.norm(f - sx) / np.linalg.norm(sx) < 1e-10


def test_materialize_matches_power_oracle():
    g, rng = random_graph(12, 0.3, 2)
    x = rng.standard_normal((12, 3))
    cfg = DiffusionConfig(lam=2.0, K=6, option="2", epsilon=1.0, drop_low_order=True)
    t = build_for_config(g, x, cfg)
    expected = oracles.series_S(t.toarray(), 2.0, 6, k0=2)
    assert np.allclose(materialize_S(t, cfg), expected, atol=1e-14)


def test_oracle_small_lambda_and_single_node():
    g, rng = random_graph(10, 0.3, 3)
    x = rng.standard_normal((10, 2))
    assert np.allclose(closed_form_oracle(normalize(g), x, 1e-12, 0.0), x, atol=1e-10)
    one = Graph.from_edges(1, [])
    assert np.allclose(closed_form_oracle(normalize(one), np.array([[3.0, -1.0]]), 5.0, 0.0), [[3.0, -1.0]])


def test_oracle_series_agreement_at_k500():
    g, rng = random_graph(30, 0.15, 4)
    x = rng.standard_normal((30, 4))
    exact = closed_form_oracle(normalize(g), x, 1.0, 0.0)
    cfg = DiffusionConfig(lam=1.0, K=500)
    f = diffuse_features(build_for_config(g, x, cfg), x, cfg)
    assert np.linalg.norm(f - exact) / np.linalg.norm(exact) < 1e-8


def test_oracle_matches_series_with_epsilon():
    # with eps > 0 the series still sums (I + lam L + lam eps Phi)^-1 when it converges
    g, rng = random_graph(25, 0.2, 5)
    x = rng.standard_normal((25, 3))
    cfg = DiffusionConfig(lam=1.0, K=400, option="2", epsilon=0.5)
    f = diffuse_features(build_for_config(g, x, cfg), x, cfg)
    exact = closed_form_oracle(normalize(g), x, 1.0, 0.5)
    assert np.linalg.norm(f - exact) / np.linalg.norm(exact) < 1e-8


def test_oracle_capacity_and_singular():
    with pytest.raises(CapacityError):
        closed_form_oracle(normalize(PATH3), np.ones((3, 1)), 1.0, 0.0, cap=2)
    # lam*eps*Phi = -(I + lam*L) makes the system exactly zero
    na = normalize(PATH3)
    from gadc.graph import laplacian
    phi = -(np.eye(3) + laplacian(na).toarray())
    with pytest.raises(NumericError, match="singular"):
        closed_form_oracle(na, np.ones((3, 1)), 1.0, 1.0, phi=phi)


def test_residual_is_zero_for_own_output():
    g, rng = random_graph(15, 0.3, 6)
    x = rng.standard_normal((15, 3))
    cfg = DiffusionConfig(option="2", epsilon=1.0)
    t = build_for_config(g, x, cfg)
    assert residual_norm(diffuse_features(t, x, cfg), t, x, cfg) < 1e-10


def test_consistency_residual_ordering_on_sbm():
    from gadc.graph import row_normalize_features
    from gadc.perturb import SbmSpec, generate_sbm

    g, ds = generate_sbm(SbmSpec(n=100, d=16, p_in=0.1, p_out=0.01, seed=3))
    x = row_normalize_features(ds.features)
    cfg = DiffusionConfig(option="2", epsilon=1.0)
    f = diffuse_features(build_for_config(g, x, cfg), x, cfg)
    rand_f = 1.0 + np.random.default_rng(3).standard_normal(x.shape)
    assert consistency_residual(f, g, x, cfg) * 50 < consistency_residual(rand_f, g, x, cfg)


def test_tau_extremes():
    assert connectivity_factor(np.full((5, 5), 0.2))[0] == pytest.approx(1.0, abs=1e-15)
    tau, per = connectivity_factor(0.3 * np.eye(4))
    assert tau == 4.0 and per.tolist() == [4.0] * 4


def test_tau_domain_errors():
    with pytest.raises(DomainError, match="non-negative"):
        connectivity_factor(np.array([[1.0, -0.1], [0.0, 1.0]]))
    with pytest.raises(DomainError, match="sum to zero"):
        connectivity_factor(np.array([[1.0, 0.0], [0.0, 0.0]]))
    with pytest.raises(InputError):
        connectivity_factor(np.ones((2, 3)))


def test_gallery_tau_ordering_and_complete_graph_value():
    from gadc.perturb import generate_gallery

    cfg = DiffusionConfig(lam=32.0, K=32, kind="row_stochastic")
    taus = {}
    for name in ("isolated", "star4", "complete4"):
        g = generate_gallery(name)
        taus[name] = connectivity_factor(materialize_S(build_for_config(g, None, cfg), cfg))[0]
    assert taus["isolated"] == 4.0
    assert taus["isolated"] > taus["star4"] > taus["complete4"]
    # complete graph rows are not uniform: the k=0 identity term weights the diagonal
    s = oracles.series_S(np.full((4, 4), 0.25), 32.0, 32)
    assert taus["complete4"] == pytest.approx(oracles.tau(s), rel=1e-12)
    assert taus["complete4"] > 1.0


def test_noise_bound_formula_and_scaling():
    value = noise_bound(100, 10, 1.0, 32.0, 16, 1.0)
    assert value == pytest.approx(oracles.noise_bound(100, 10, 1.0, 32.0, 16, 1.0), rel=1e-14)
    assert noise_bound(100, 10, 1.0, 32.0, 16, 2.0) == pytest.approx(4 * value, rel=1e-14)
    ratio = noise_bound(400, 10, 1.0, 32.0, 16, 1.0) / value
    logs = (4 * math.log(400) + math.log(20)) / (4 * math.log(100) + math.log(20))
    assert ratio == pytest.approx(logs / 4, rel=1e-14)
    with pytest.raises(InputError):
        noise_bound(100, 10, 0.0, 32.0, 16, 1.0)


def test_empirical_noise_zero_sigma():
    cfg = DiffusionConfig()
    assert not empirical_noise_norm(identity_transition(4), cfg, 0.0, 5, 0).any()


def test_empirical_noise_expectation_on_isolated_graph():
    cfg = DiffusionConfig(lam=32.0, K=16, kind="row_stochastic")
    t = build_for_config(Graph.from_edges(4, []), None, cfg)
    norms = empirical_noise_norm(t, cfg, 1.5, 10_000, 7, d=10)
    expected = cfg.beta**2 * 1.5**2 * 4 * 10
    assert abs(norms.mean() / expected - 1) < 0.05


def test_empirical_noise_deterministic_and_vector_path():
    g, _ = random_graph(30, 0.2, 8)
    cfg = DiffusionConfig(kind="row_stochastic")
    t = build_for_config(g, None, cfg)
    a = empirical_noise_norm(t, cfg, 1.0, 20, 11, d=3)
    assert np.array_equal(a, empirical_noise_norm(t, cfg, 1.0, 20, 11, d=3))
    assert not np.array_equal(a, empirical_noise_norm(t, cfg, 1.0, 20, 12, d=3))
    # the per-trial sparse path agrees with the dense-S path
    from gadc import diffusion
    old = diffusion.ORACLE_CAP
    try:
        diffusion.ORACLE_CAP = 10
        b = diffusion.empirical_noise_norm(t, cfg, 1.0, 20, 11, d=3)
    finally:
        diffusion.ORACLE_CAP = old
    assert np.allclose(a, b, rtol=1e-10)
    with pytest.raises(InputError):
        empirical_noise_norm(t, cfg, 1.0, 2, 0, statistic="median")


def test_report_fields():
    cfg = DiffusionConfig(lam=32.0, K=16, kind="row_stochastic")
    rep = diffusion_report(build_for_config(PATH3, None, cfg), cfg)
    assert rep.beta == pytest.approx(1 - (32 / 33) ** 17, abs=1e-12)
    assert 1.0 <= rep.tau <= 3.0
    d = rep.to_dict()
    assert d["beta"] == rep.beta and len(d["tau_per_node"]) == 3


# ---------------------------------------------------------------- properties

lams = st.sampled_from([0.5, 1.0, 4.0, 32.0])
Ks = st.integers(0, 20)


@given(edge_lists(max_n=15, weighted=True), lams, Ks)
def test_row_sum_lemma(case, lam, K):
    n, edges, w = case
    cfg = DiffusionConfig(lam=lam, K=K, kind="row_stochastic")
    s = materialize_S(build_for_config(Graph.from_edges(n, edges, w), None, cfg), cfg)
    assert np.max(np.abs(s.sum(axis=1) - row_sum_constant(lam, K))) < 1e-9


@given(edge_lists(max_n=15), lams, Ks)
def test_row_square_range_and_tau_bounds(case, lam, K):
    n, edges, _ = case
    cfg = DiffusionConfig(lam=lam, K=K, kind="row_stochastic")
    s = materialize_S(build_for_config(Graph.from_edges(n, edges), None, cfg), cfg)
    sq = (s * s).sum(axis=1)
    b2 = cfg.beta**2
    assert np.all(sq >= b2 / n * (1 - 1e-12)) and np.all(sq <= b2 * (1 + 1e-12))
    tau, per = connectivity_factor(s)
    assert 1 - 1e-12 <= tau <= n * (1 + 1e-12)
    assert tau == pytest.approx(oracles.tau(s), rel=1e-12)


@given(graphs_with_features(max_n=10), lams, st.integers(0, 8))
def test_vector_path_matches_dense_oracle(case, lam, K):
    n, edges, x = case
    g = Graph.from_edges(n, edges)
    cfg = DiffusionConfig(lam=lam, K=K, option="2", epsilon=0.3)
    t = build_for_config(g, x, cfg)
    tm = oracles.normalized(oracles.dense_adj(n, edges), "symmetric") - 0.3 * oracles.phi2(x)
    expected = oracles.series_S(tm, lam, K) @ x
    assert np.allclose(diffuse_features(t, x, cfg), expected, rtol=1e-10, atol=1e-12)


@given(graphs_with_features(max_n=10), st.floats(-3, 3), st.floats(-3, 3))
def test_linearity(case, a, b):
    n, edges, x1 = case
    x2 = np.cos(x1) + 1.0
    cfg = DiffusionConfig(lam=4.0, K=8, option="3", epsilon=0.5)
    t = build_for_config(Graph.from_edges(n, edges), x1, cfg)
    lhs = diffuse_features(t, a * x1 + b * x2, cfg)
    rhs = a * diffuse_features(t, x1, cfg) + b * diffuse_features(t, x2, cfg)
    assert np.linalg.norm(lhs - rhs) <= 1e-10 * max(np.linalg.norm(rhs), 1e-300) + 1e-13


@given(graphs_with_features(max_n=10))
def test_symmetry_and_drop_low_order(case):
    n, edges, x = case
    g = Graph.from_edges(n, edges)
    for opt, eps in (("plain", 0.0), ("1", 1.0), ("2", 1.0), ("4", 0.0)):
        cfg = DiffusionConfig(lam=3.0, K=6, option=opt, epsilon=eps)
        t = build_for_config(g, x, cfg)
        s = materialize_S(t, cfg)
        assert np.max(np.abs(s - s.T)) < 1e-10
        full = diffuse_features(t, x, cfg)
        low = (x + cfg.ratio * (t.op @ x)) / (cfg.lam + 1)
        dropped = diffuse_features(t, x, DiffusionConfig(lam=3.0, K=6, option=opt, epsilon=eps, drop_low_order=True))
        assert np.linalg.norm(full - low - dropped) <= 1e-10 * max(np.linalg.norm(full), 1.0)


@pytest.mark.parametrize("seed", range(3))
def test_truncation_error_halves_with_doubled_K(seed):
    # lam = 32 keeps every error above rounding level up to K = 128
    g, rng = random_graph(30, 0.15, 100 + seed)
    x = rng.standard_normal((30, 3))
    exact = closed_form_oracle(normalize(g), x, 32.0, 0.0)
    err = {}
    for K in (4, 8, 16, 32, 64, 128):
        cfg = DiffusionConfig(lam=32.0, K=K)
        f = diffuse_features(build_for_config(g, x, cfg), x, cfg)
        err[K] = np.linalg.norm(f - exact) / np.linalg.norm(exact)
    for m in (4, 16, 64):
        assert err[2 * m] < err[m]
