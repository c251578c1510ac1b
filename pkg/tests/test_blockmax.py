import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from mestim.blockmax import (
    BlockMaxRow,
    LogPerturbedBaseline,
    TailModel,
    block_cdf,
    block_size,
    check_doa_uniform,
    check_frechet_identifiability,
    check_min_maxima_divergence,
    fit_frechet,
    frechet_limit_cdf,
    frechet_loglik,
    hetero_cdf,
    median_scaling,
    pareto_baseline,
    sample_block_maxima,
)
from mestim.designs import UNIFORM, constant_design
from mestim.distributions import FRECHET, DomainError, frechet_logpdf
from mestim.estimator import BoxDomain, Criterion, maximize
from mestim.streams import make_stream


def _const_model(alpha, c=1.0):
    return TailModel(pareto_baseline(alpha), lambda x: np.full(np.shape(x)[0], float(c)))


def _row(x, m, r=1):
    x = np.asarray(x, dtype=float).reshape(-1, 1)
    m = np.asarray(m, dtype=float)
    return BlockMaxRow(n=m.size, block_size=r, covariates=x, maxima=m)


def test_pareto_baseline_examples():
    b = pareto_baseline(1.0)
    assert float(b.cdf(2.0)) == 0.5
    assert float(pareto_baseline(2.0).norming(100)) == pytest.approx(10.0)
    assert (1 - 0.01) ** 100 == pytest.approx(0.366032, abs=1e-6)
    assert float(block_cdf(_const_model(1.0), [0.0], b.norming(100), 100)[0]) == pytest.approx(0.366032, abs=1e-6)
    with pytest.raises(DomainError):
        pareto_baseline(0.0)


def test_pareto_quantile_round_trip():
    b = pareto_baseline(1.7)
    p = np.linspace(0.01, 0.99, 50)
    assert np.allclose(b.cdf(b.quantile(p)), p, atol=1e-14)


def test_hetero_cdf_examples():
    assert hetero_cdf(_const_model(1.0, 1.0), 0.3, 5.0) == pytest.approx(float(pareto_baseline(1.0).cdf(5.0)))
    assert hetero_cdf(_const_model(1.0, 2.0), 0.3, 2.0) == pytest.approx(0.25)


def test_hetero_cdf_log_ratio_is_c():
    model = TailModel.from_scale_link(pareto_baseline(1.5), [0.7])
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 1, 100)
    y = rng.uniform(1.5, 20, 100)
    c = model.c(x)
    ratio = np.log(hetero_cdf(model, x, y)) / np.log(pareto_baseline(1.5).cdf(y))
    assert np.allclose(ratio, c, rtol=1e-12)


def test_block_size_rules():
    assert block_size("(log n)^2", 1000) == math.ceil(math.log(1000) ** 2) == 48
    assert block_size(7, 10) == 7
    assert block_size("fixed:3", 10) == 3
    assert block_size("log n", 1) == 1
    with pytest.raises(DomainError):
        block_size("n^3", 10)


def test_r1_is_single_draw():
    model = _const_model(2.0)
    row = sample_block_maxima(model, UNIFORM, 10_000, 1, seed=2)
    assert stats.kstest(row.maxima, lambda t: pareto_baseline(2.0).cdf(t)).pvalue > 1e-3


def test_sampling_deterministic():
    model = TailModel.from_scale_link(pareto_baseline(2.0), [1.0])
    a = sample_block_maxima(model, UNIFORM, 100, 20, seed=4)
    b = sample_block_maxima(model, UNIFORM, 100, 20, seed=4)
    assert a.maxima.tobytes() == b.maxima.tobytes()


def test_shortcut_matches_exact_block_cdf():
    model = _const_model(1.0, 1.7)
    r = 50
    row = sample_block_maxima(model, constant_design([0.4]), 10_000, r, seed=7)
    res = stats.kstest(row.maxima, lambda t: block_cdf(model, np.full(np.size(t), 0.4), t, r))
    assert res.statistic < stats.kstwo.ppf(1 - 1e-3, 10_000)


def test_materialized_matches_exact_block_cdf():
    model = _const_model(1.3, 0.8)
    r = 25
    row = sample_block_maxima(model, constant_design([0.0]), 4000, r, seed=3, materialize=True)
    res = stats.kstest(row.maxima, lambda t: block_cdf(model, np.zeros(np.size(t)), t, r))
    assert res.pvalue > 1e-3


def test_limit_scaled_maxima_close_to_frechet():
    model = _const_model(1.0)
    r = 10_000
    row = sample_block_maxima(model, UNIFORM, 10_000, r, seed=5)
    m = row.maxima / float(model.baseline.norming(r))
    assert stats.kstest(m, lambda t: np.exp(-1.0 / t)).statistic < 0.02


def test_loglik_single_observation():
    assert frechet_loglik(1.0, [0.0], 1.0, _row([0.0], [1.0])) == pytest.approx(-1.0, abs=1e-15)


def test_loglik_matches_direct_sum():
    rng = np.random.default_rng(1)
    x = rng.uniform(size=50)
    m = rng.uniform(0.5, 10, 50)
    row = _row(x, m)
    direct = sum(float(frechet_logpdf((1.3 * math.exp(0.4 * xi), 1.8), mi)) for xi, mi in zip(x, m)) / 50
    assert frechet_loglik(1.3, [0.4], 1.8, row) == pytest.approx(direct, abs=1e-12)


def test_loglik_minus_inf_on_nonpositive():
    assert frechet_loglik(1.0, [0.0], 1.0, _row([0.1, 0.2], [1.0, 0.0])) == -math.inf


@settings(max_examples=30, deadline=None)
@given(c=st.floats(1e-3, 1e3), seed=st.integers(0, 1000))
def test_loglik_scale_equivariance(c, seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(size=20)
    m = rng.uniform(0.5, 5, 20)
    a = frechet_loglik(c * 1.1, [0.3], 2.0, _row(x, c * m))
    b = frechet_loglik(1.1, [0.3], 2.0, _row(x, m))
    assert a == pytest.approx(b - math.log(c), abs=1e-12)


def test_median_scaling_examples():
    assert median_scaling([1.0, 2.0, 3.0]) == 2.0
    assert median_scaling([4.0, 1.0, 3.0, 2.0]) == 2.0


def test_median_over_norming_constant():
    model = _const_model(1.0)
    r = 1000
    row = sample_block_maxima(model, UNIFORM, 200_000, r, seed=9)
    assert median_scaling(row) / float(model.baseline.norming(r)) == pytest.approx(1 / math.log(2), abs=0.01)


def test_fit_exact_frechet_constant_link():
    # responses drawn from the Frechet law itself, so the model is exact at every n
    errs = []
    for rep in range(20):
        tau0, alpha0 = 1.5, 2.0
        m = FRECHET.sample((tau0, alpha0), make_stream(40, rep), 2000)
        row = _row(np.zeros(2000), m)
        fit = fit_frechet(row, beta_bounds=((0.0,), (0.0,)), scaling=1.0, gamma_bounds=(0.2, 5.0))
        errs.append([abs(fit.alpha_hat - alpha0), abs(fit.tau_hat - tau0)])
    assert np.all(np.median(errs, axis=0) < 0.1)


def test_gamma_confounding_dense_grid():
    m = FRECHET.sample((1.2, 1.5), make_stream(3), 500)
    row = _row(np.zeros(500), m)
    fit = fit_frechet(row, alpha_bounds=(0.5, 3.0), beta_bounds=((0.0,), (0.0,)), gamma_bounds=(0.5, 3.0), scaling=1.0)
    a = np.linspace(0.5, 3.0, 501)
    g = np.linspace(0.5, 3.0, 501)
    best, arg = -math.inf, None
    for gi in g:
        v = np.array([np.mean(frechet_logpdf((gi, ai), m)) for ai in a])
        j = int(np.argmax(v))
        if v[j] > best:
            best, arg = v[j], (a[j], gi)
    assert abs(fit.alpha_hat - arg[0]) <= a[1] - a[0]
    assert abs(fit.gamma_hat - arg[1]) <= g[1] - g[0]
    assert fit.fit.criterion_value >= best - 1e-9


def test_fit_heteroscedastic_recovers_truth():
    model = TailModel.from_scale_link(pareto_baseline(2.0), [1.0])
    r = block_size("(log n)^2", 2000)
    row = sample_block_maxima(model, UNIFORM, 2000, r, seed=11)
    a_r = float(model.baseline.norming(r))
    fit = fit_frechet(row, scaling=a_r, reference=[2.0, 1.0, 1.0])
    assert fit.status == "success"
    assert abs(fit.alpha_hat - 2.0) < 0.2
    assert abs(fit.beta_hat[0] - 1.0) < 0.2
    assert abs(math.log(fit.gamma_hat)) < 0.2
    assert fit.fit.gap >= 0
    assert fit.gamma_bounds[0] <= fit.gamma_hat <= fit.gamma_bounds[1]


def test_fit_degenerate_with_nonpositive_maxima():
    fit = fit_frechet(_row([0.1, 0.2, 0.3], [1.0, -1.0, 2.0]), scaling=1.0)
    assert fit.status == "degenerate"
    assert fit.alpha_hat is None


def test_frechet_identifiability_check():
    grid = np.linspace(-2, 2, 9)[:, None]
    ok = check_frechet_identifiability([0.5], grid, UNIFORM)
    assert ok.identified

    def flat(beta, x):
        return np.full(np.shape(x)[0], math.exp(beta[0]))

    bad = check_frechet_identifiability([0.5], grid, UNIFORM, sigma_link=flat)
    assert not bad.identified
    assert len(bad.violations) == 9 - 1


def test_flat_link_likelihood_ridge():
    # gamma e^beta is all the likelihood sees under a constant-in-x link
    def flat(beta, x):
        return np.full(np.shape(x)[0], math.exp(beta[0]))

    row = _row(np.linspace(0, 1, 300), FRECHET.sample((2.0, 2.0), make_stream(8), 300))
    a = frechet_loglik(1.0, [math.log(2.0)], 2.0, row, sigma_link=flat)
    b = frechet_loglik(2.0, [0.0], 2.0, row, sigma_link=flat)
    assert a == pytest.approx(b, abs=1e-12)


def test_doa_example_cell():
    rep = check_doa_uniform(_const_model(1.0), [0.5], [1.0], [100])
    assert rep.errors[0, 0] == pytest.approx(abs(0.99**100 - math.exp(-1)), abs=1e-12)
    assert rep.errors[0, 0] == pytest.approx(0.00185, abs=1e-5)


def test_doa_decreasing_and_small():
    model = TailModel.from_scale_link(pareto_baseline(2.0), [1.0])
    rep = check_doa_uniform(model, np.linspace(0, 1, 11), np.linspace(0.2, 5, 25), [100, 1000, 10_000])
    assert rep.strictly_decreasing and rep.decreasing_per_y
    assert rep.sup_errors[-1] < 2e-4


def test_doa_error_depends_on_x_through_c_only():
    # with F_x = F_0^c the error at (x, y, r) equals the c = 1 error at (y / sigma(x), c(x) r)
    alpha, r = 1.5, 200
    model = TailModel.from_scale_link(pareto_baseline(alpha), [0.8])
    base = _const_model(alpha)
    x = np.linspace(0, 1, 7)
    y = 2.0
    a_r = float(base.baseline.norming(r))
    err_x = np.abs(block_cdf(model, x, a_r * y, r) - frechet_limit_cdf(model, x, y))
    c, s = model.c(x), model.scale(x)
    r_eff = c * r
    err_1 = np.abs(block_cdf(base, x, base.baseline.norming(r_eff) * y / s, r_eff) - frechet_limit_cdf(base, x, y / s))
    assert np.allclose(err_x, err_1, atol=1e-12)
    assert np.ptp(err_x) > 1e-5


def test_log_perturbed_baseline():
    b = LogPerturbedBaseline(2.0)
    y0 = b.lower_endpoint
    assert float(b.tail(y0)) == pytest.approx(1.0, abs=1e-12)
    q = np.array([0.5, 1e-2, 1e-6])
    assert np.allclose(b.tail(b.tail_quantile(q)), q, rtol=1e-10)
    r = 1000
    assert float(b.tail(b.norming(r))) == pytest.approx(1 / r, rel=1e-10)
    # regularly varying: the tail ratio at 2y over y tends to 2^-alpha
    big = np.array([1e2, 1e6, 1e10, 1e50])
    ratio = b.tail(2 * big) / b.tail(big)
    assert np.allclose(ratio, 0.25 * np.log(np.e + big) / np.log(np.e + 2 * big), rtol=1e-10)
    assert np.all(np.diff(np.abs(ratio - 0.25)) < 0)


def test_log_perturbed_doa_inexact_but_decreasing():
    model = TailModel(LogPerturbedBaseline(2.0), lambda x: np.ones(np.shape(x)[0]))
    rep = check_doa_uniform(model, [0.5], np.linspace(0.5, 4, 15), [100, 1000, 10_000])
    assert rep.strictly_decreasing
    assert rep.sup_errors[-1] > 2e-4


def test_min_maxima_bound_example():
    model = TailModel(pareto_baseline(1.0), lambda x: 1.0 + np.asarray(x)[:, 0])
    rep = check_min_maxima_divergence(model, UNIFORM, [(1000, 48)], reps=400, y=2.0, seed=1)
    e = rep.entries[0]
    p_bar = 0.5  # sup over c in [1, 2] of 0.5^c
    assert e.bound == pytest.approx(1000 * p_bar**48, rel=1e-9)
    assert e.exact_probability <= e.bound
    assert rep.bound_respected


def test_min_maxima_diverges_with_growing_blocks():
    model = TailModel(pareto_baseline(1.0), lambda x: 1.0 + np.asarray(x)[:, 0])
    sched = [(n, block_size("(log n)^2", n)) for n in (100, 1000, 10_000)]
    rep = check_min_maxima_divergence(model, UNIFORM, sched, reps=50, y=2.0, seed=2)
    assert rep.bound_respected and rep.diverging


def test_min_maxima_r1_does_not_diverge():
    model = TailModel(pareto_baseline(1.0), lambda x: 1.0 + np.asarray(x)[:, 0])
    rep = check_min_maxima_divergence(model, UNIFORM, [(n, 1) for n in (100, 1000, 10_000)], reps=50, y=2.0, seed=2)
    assert not rep.diverging
    assert rep.entries[-1].frequency == 1.0
    assert rep.bound_respected


def test_min_maxima_coupling_monotone_in_r():
    model = TailModel(pareto_baseline(1.0), lambda x: 1.0 + np.asarray(x)[:, 0])
    rep = check_min_maxima_divergence(model, UNIFORM, [(500, 5), (500, 20), (500, 80)], reps=60, y=2.0, seed=3)
    mins = [e.minima for e in rep.entries]
    # coupled draws: pathwise ordering, hence also a one-sided rank test
    assert np.all(mins[0] <= mins[1]) and np.all(mins[1] <= mins[2])
    assert stats.mannwhitneyu(mins[1], mins[0], alternative="greater").pvalue < 1e-3


def test_fit_via_estimator_matches_fit_frechet():
    model = TailModel.from_scale_link(pareto_baseline(1.5), [0.5])
    row = sample_block_maxima(model, UNIFORM, 300, 20, seed=6)
    fit = fit_frechet(row, scaling=1.0, gamma_bounds=(0.2, 50.0))
    crit = Criterion(lambda e: np.array([frechet_loglik(e[2], [e[1]], e[0], row)]), 1)
    res = maximize(crit, BoxDomain([0.3, -3, 0.2], [5, 3, 50.0]))
    assert fit.fit.criterion_value == pytest.approx(res.criterion_value, abs=1e-9)
    assert np.allclose([fit.alpha_hat, fit.beta_hat[0], fit.gamma_hat], res.eta_hat, atol=1e-3)
