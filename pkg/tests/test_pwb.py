import math

import numpy as np
import pytest
from scipy import stats

from twoway_pwb.dgp import DgpSpec, generate
from twoway_pwb.exceptions import DegenerateDraws, SingularGram
from twoway_pwb.harness import prepare_inference
from twoway_pwb.multipliers import build_spatial_engine
from twoway_pwb.panel import PanelData, ols_fit, project_scores
from twoway_pwb.pwb import (
    PWB_D,
    PWB_H,
    PWB_V,
    PwbVariant,
    bootstrap_draw,
    bootstrap_score_sums,
    compute_scaling,
    diagnostic_pass,
    indicators,
    ks_diagnostic,
    ks_normality_pvalue,
    ks_statistic,
    kolmogorov_sf,
    multiplier_blocks,
    order_statistic_bounds,
    run_pwb,
    standardize_columns,
    thresholds,
)
from twoway_pwb.rng import KeyedStream
from twoway_pwb.variance import VarianceEstimates, spatial_gram


def _state(design="d1", n=20, t=20, seed=1, **kw):
    panel, _ = generate(DgpSpec(design, n, t, **kw), np.random.default_rng(seed))
    return prepare_inference(panel)


def _run(state, variant, b=199, alpha=0.05, seed=3, beta0=None, **kw):
    k = state.fit.beta_hat.shape[0]
    rho = np.eye(k)[-1]
    beta0 = np.asarray(state.fit.beta_hat) if beta0 is None else beta0
    return run_pwb(state.fit, state.proj, state.est, state.engine, state.q, variant, b,
                   alpha, rho, beta0, KeyedStream(seed), **kw)


def _fixed_est(sa, sd, k=1):
    z = np.zeros((k, k))
    return VarianceEstimates(np.atleast_2d(sa), np.atleast_2d(sd), z, 0.0, 1.0, z, z)


# ---------------------------------------------------------------- scaling


def test_theta_scalar_example():
    proj = project_scores([[-4.0, -4.0], [4.0, 4.0]])
    eng = build_spatial_engine([[0, 1.0], [1.0, 0]], 1.0)
    assert spatial_gram(proj, eng)[0, 0] == pytest.approx(16.0)
    sc = compute_scaling(proj, _fixed_est(4.0, 0.0), eng, 0.0, PWB_V, 2, 2)
    assert sc.theta_a[0, 0] == pytest.approx(0.5)
    assert sc.d_a.tolist() == [1] and sc.d_d.tolist() == [0]
    assert sc.theta_d[0, 0] == 0.0


def test_whitening_identity():
    state = _state()
    gram = spatial_gram(state.proj, state.engine)
    sc = compute_scaling(state.proj, state.est, state.engine, state.q,
                         PwbVariant.oracle(state.est.sigma_a2, state.est.sigma_d2))
    assert np.allclose(sc.theta_a @ gram @ sc.theta_a.T, state.est.sigma_a2, atol=1e-10)


def test_indicators_off_remove_components():
    state = _state("d3")
    assert indicators(state.est.sigma_a2, np.full(5, 1e9)).sum() == 0
    zero = PwbVariant.oracle(np.zeros((5, 5)), np.zeros((5, 5)))
    sc = compute_scaling(state.proj, state.est, state.engine, state.q, zero)
    assert not sc.theta_a.any() and not sc.theta_d.any()


def test_singular_gram():
    proj = project_scores([[1.0, 2.0], [1.0, 2.0]])  # no unit variation
    eng = build_spatial_engine([[0, 1.0], [1.0, 0]], 1.0)
    with pytest.raises(SingularGram):
        compute_scaling(proj, None, eng, 0.0, PwbVariant.oracle([[1.0]], [[0.0]]))


def test_thresholds_and_hybrid_blend():
    da, dd = thresholds("D", 50, 40, 2)
    va, vd = thresholds("V", 50, 40, 2)
    assert da[0] == pytest.approx(math.log(40) / 40) and dd[0] == pytest.approx(math.log(50) / 50)
    assert va[0] == pytest.approx(1 / (40 * math.log(40)))
    assert vd[0] == pytest.approx(1 / (50 * math.log(50)))
    state = _state(k=2)
    sc = compute_scaling(state.proj, state.est, state.engine, state.q, PWB_H, d_star=[1, 0])
    d20a, d20d = thresholds("D", 20, 20, 2)
    v20a, v20d = thresholds("V", 20, 20, 2)
    assert sc.mu_a.tolist() == [d20a[0], v20a[1]]
    assert sc.mu_d.tolist() == [d20d[0], v20d[1]]
    with pytest.raises(ValueError):
        compute_scaling(state.proj, state.est, state.engine, state.q, PWB_H)
    with pytest.raises(ValueError):
        thresholds("H", 5, 5, 1)


def test_oracle_variant_validation():
    with pytest.raises(ValueError):
        PwbVariant("oracle")
    with pytest.raises(ValueError):
        PwbVariant.oracle([[-1.0]], [[0.0]])


# ---------------------------------------------------------------- draws


def test_zero_scaling_and_no_interaction_gives_zero_draw():
    x = np.ones((3, 4, 1))
    panel = PanelData(y=np.full((3, 4), 2.0), x=x)
    fit = ols_fit(panel)
    proj = project_scores(fit)
    eng = build_spatial_engine(np.zeros((3, 3)) + 5 * (1 - np.eye(3)), 1.0)
    sc = compute_scaling(proj, None, eng, 0.0, PwbVariant.oracle([[0.0]], [[0.0]]))
    d = bootstrap_draw(proj, sc, eng, 0.0, fit.xtx_inv, np.random.default_rng(0))
    assert np.allclose(d, 0.0, atol=1e-12)


def test_bootstrap_mean_zero():
    state = _state("d1", 10, 10, k=2)
    sc = compute_scaling(state.proj, state.est, state.engine, state.q, PWB_V)
    eta_n, eta_t = multiplier_blocks(state.engine, state.q, 10_000, 10, KeyedStream(8))
    draws = bootstrap_score_sums(state.proj, sc, eta_n, eta_t) @ np.asarray(state.fit.xtx_inv).T
    for col in draws.T:
        assert abs(col.mean()) < 3 * col.std() / math.sqrt(col.size)


def test_unit_component_variance_matches_kernel_gram():
    state = _state("d1", 9, 6, k=2)
    proj, eng = state.proj, state.engine
    n, t = 9, 6
    b = 100_000
    eta_n, _ = multiplier_blocks(eng, 0.0, b, t, KeyedStream(4))
    unit = t * (eta_n @ proj.a_dd) / (n * t)
    target = proj.a_dd.T @ eng.kernel_matrix @ proj.a_dd / n ** 2
    sq = unit[:, 0] ** 2
    assert abs(sq.mean() - target[0, 0]) < 3 * sq.std() / math.sqrt(b)


def test_keyed_draw_matches_vectorized_pass():
    state = _state()
    res = _run(state, PWB_V, b=199, seed=11)
    stream = KeyedStream(11).child("final")
    for b in (0, 17, 198):
        single = bootstrap_draw(state.proj, res.scaling, state.engine, state.q,
                                state.fit.xtx_inv, (stream, b))
        assert np.allclose(single, res.draws[b], rtol=1e-12, atol=1e-14)


def test_fixed_seed_reproducible():
    state = _state()
    a = _run(state, PWB_H, seed=5)
    b = _run(state, PWB_H, seed=5)
    c = _run(state, PWB_H, seed=6)
    assert np.array_equal(a.draws, b.draws)
    assert not np.array_equal(a.draws, c.draws)
    g1, g2 = np.random.default_rng(1), np.random.default_rng(1)
    args = (state.proj, a.scaling, state.engine, state.q, state.fit.xtx_inv)
    assert np.array_equal(bootstrap_draw(*args, g1), bootstrap_draw(*args, g2))


def test_hybrid_reduces_to_v_and_d():
    state = _state(k=3)
    v = _run(state, PWB_V)
    d = _run(state, PWB_D)
    h0 = _run(state, PWB_H, d_star=[0, 0, 0])
    h1 = _run(state, PWB_H, d_star=[1, 1, 1])
    assert np.array_equal(h0.draws, v.draws)
    assert np.array_equal(h1.draws, d.draws)
    assert np.isnan(h0.ks_pvalues).all()


def test_oracle_equals_feasible_when_estimates_are_truth():
    state = _state("d1", 20, 20, k=2)
    sc = compute_scaling(state.proj, state.est, state.engine, state.q, PWB_V)
    assert sc.d_a.all() and sc.d_d.all()
    oracle = PwbVariant.oracle(state.est.sigma_a2, state.est.sigma_d2)
    assert np.array_equal(_run(state, oracle).draws, _run(state, PWB_V).draws)


def test_hybrid_uses_diagnostic_and_reuses_precomputed():
    state = _state("d2", 20, 20, k=2)
    b = 199
    diag = diagnostic_pass(state.proj, state.est, state.engine, state.q, b,
                           KeyedStream(3).child("diagnostic"), state.fit.xtx_inv, 1 / b)
    res = _run(state, PWB_H, b=b)
    assert np.array_equal(res.d_star, diag[2])
    assert np.array_equal(res.ks_pvalues, diag[1])
    again = _run(state, PWB_H, b=b, diagnostic=diag)
    assert np.array_equal(again.draws, res.draws)


# ---------------------------------------------------------------- test and CI


def test_far_null_rejects_and_truth_usually_not():
    state = _state("d1", 20, 20, seed=2)
    res = _run(state, PWB_V, b=399)
    se = res.draws[:, -1].std()
    beta0 = np.asarray(state.fit.beta_hat).copy()
    beta0[-1] += 10 * se
    assert _run(state, PWB_V, b=399, beta0=beta0).reject
    assert not res.reject


def test_ci_contains_estimate_and_is_ordered():
    state = _state()
    res = _run(state, PWB_H)
    assert np.all(res.ci_lower <= res.ci_upper)
    assert res.draws.shape == (199, 5) and res.ci_length > 0
    beta = np.asarray(state.fit.beta_hat)
    assert np.all((res.ci_lower <= beta) & (beta <= res.ci_upper))
    s = res.summary()
    assert s["variant"] == "H" and len(s["ci"]) == 5 and s["draws_summary"]["b"] == 199


def test_decision_scale_invariance():
    state = _state("d1", 15, 15, seed=4, k=2)
    panel = state.panel
    k = 2
    c = 3.0
    res = []
    for scale in (1.0, c):
        p = PanelData(y=scale * np.asarray(panel.y), x=panel.x, locations=panel.locations)
        st = prepare_inference(p)
        var = PwbVariant.oracle(scale ** 2 * state.est.sigma_a2, scale ** 2 * state.est.sigma_d2)
        beta0 = scale * (np.asarray(state.fit.beta_hat) + [0, 0.05])
        r = run_pwb(st.fit, st.proj, st.est, st.engine, st.q, var, 199, 0.05,
                    np.eye(k)[-1], beta0, KeyedStream(2))
        res.append(r)
    assert np.allclose(res[1].draws, c * res[0].draws, rtol=1e-8, atol=1e-12)
    assert res[0].reject == res[1].reject


def test_order_statistics():
    v = np.arange(1, 1000, dtype=float)
    lo, hi = order_statistic_bounds(v, 0.05)
    assert (lo, hi) == (25.0, 975.0)
    lo, hi = order_statistic_bounds(np.arange(1, 400, dtype=float), 0.05)
    assert (lo, hi) == (10.0, 390.0)


def test_run_pwb_validation():
    state = _state()
    with pytest.raises(ValueError):
        run_pwb(state.fit, state.proj, state.est, state.engine, state.q, PWB_V, 199, 0.05,
                np.ones(5), np.zeros(5), KeyedStream(1))
    with pytest.raises(ValueError):
        _run(state, PWB_V, alpha=1.5)
    with pytest.raises(ValueError):
        _run(state, PWB_V, b=20)
    with pytest.raises(ValueError):
        _run(state, PWB_V, beta0=np.zeros(3))


# ---------------------------------------------------------------- KS


@pytest.mark.parametrize("lam", [0.2, 0.5, 0.8, 0.99, 1.0, 1.36, 2.0, 3.5])
def test_kolmogorov_sf_matches_scipy(lam):
    assert kolmogorov_sf(lam) == pytest.approx(stats.kstwobign.sf(lam), abs=1e-10)


def test_ks_statistic_matches_scipy(rng):
    x = rng.standard_normal(500)
    assert ks_statistic(x) == pytest.approx(stats.kstest(x, "norm").statistic, abs=1e-14)


def test_ks_perfect_grid():
    grid = stats.norm.ppf((np.arange(1, 1000) - 0.5) / 999)
    p, d = ks_diagnostic(grid, 1 / 999)
    assert ks_statistic(grid) < 0.001 and p > 0.999 and d == 0


def test_ks_degenerate_column():
    with pytest.raises(DegenerateDraws):
        ks_normality_pvalue(np.ones(100))
    assert ks_diagnostic(np.zeros(100), 0.01) == (0.0, 1)


def test_ks_p_floor():
    assert ks_normality_pvalue(np.r_[np.full(500, 5.0), np.full(499, 5.1)]) >= 1e-300


def test_standardize_columns():
    sums = np.array([[1.0, 0.0], [-1.0, 0.0], [2.0, 0.0]])
    t, scale = standardize_columns(sums)
    assert scale[0] == pytest.approx(math.sqrt(3.0))
    assert np.allclose(np.sum(t[:, 0] ** 2) / 2, 1.0)
    assert not t[:, 1].any()


def test_ks_flags_products_not_gaussians():
    b = 999
    kappa = 1 / b
    prod_flags, gauss_flags = [], []
    for seed in range(100):
        g = np.random.default_rng([77, seed])
        z = g.standard_normal((b, 3))
        prod, _ = standardize_columns((z[:, 0] * z[:, 1])[:, None])
        gauss, _ = standardize_columns(z[:, 2:])
        prod_flags.append(ks_diagnostic(prod[:, 0], kappa)[1])
        gauss_flags.append(ks_diagnostic(gauss[:, 0], kappa)[1])
    assert np.mean(prod_flags) >= 0.95
    assert np.mean(gauss_flags) <= 0.05
