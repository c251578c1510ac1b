import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from mestim.distributions import FRECHET, GEV, NORMAL, POINT_MASS, Discrete, DomainError, point_mass
from mestim.scoring import (
    EnergyConfig,
    EnergyScore,
    LogScore,
    energy_score,
    energy_score_empirical,
    log_score,
    make_rule,
    propriety_gap,
    propriety_sweep,
)
from mestim.streams import make_stream


class _Uniform01:
    def quantile(self, p):
        return np.asarray(p, dtype=float)


def test_log_score_examples():
    assert log_score(FRECHET, (1.0, 1.0), 1.0) == pytest.approx(-1.0, abs=1e-12)
    assert log_score(GEV, (0.0, 1.0, 0.5), -3.0) == -math.inf
    assert log_score(NORMAL, (0.0, 1.0), 0.0) == pytest.approx(-0.918939, abs=1e-6)


def test_energy_point_mass_exact():
    for beta in (0.5, 1.0, 1.5):
        s = energy_score(point_mass(0.0), 2.0, EnergyConfig(beta=beta), 0)
        assert s == pytest.approx(-(2.0**beta), abs=1e-15)


def test_energy_two_point_closed_form():
    d = Discrete([0.0, 2.0])
    assert energy_score(d, 1.0, EnergyConfig(beta=1.0), 0) == pytest.approx(-0.5, abs=1e-15)


def test_energy_normal_against_half_normal_oracle():
    oracle = 1 / math.sqrt(math.pi) - math.sqrt(2 / math.pi)
    assert oracle == pytest.approx(-0.23369, abs=1e-5)
    s = energy_score(NORMAL(0.0, 1.0), 0.0, EnergyConfig(beta=1.0, mc_pairs=200_000), make_stream(3))
    assert abs(s - oracle) < 0.01


def test_energy_config_rejects_bad_values():
    with pytest.raises(DomainError):
        EnergyConfig(mc_pairs=0)
    with pytest.raises(DomainError):
        EnergyConfig(beta=2.0)
    with pytest.raises(DomainError):
        EnergyScore(beta=0.0)


def test_energy_deterministic_in_stream():
    cfg = EnergyConfig(beta=1.0, mc_pairs=1000)
    a = energy_score(GEV(0.0, 1.0, 0.2), 0.3, cfg, make_stream(5))
    b = energy_score(GEV(0.0, 1.0, 0.2), 0.3, cfg, make_stream(5))
    assert a == b


def test_empirical_examples():
    assert energy_score_empirical([3.0], 1.0, beta=1.5) == pytest.approx(-(2.0**1.5))
    assert energy_score_empirical([0.0, 2.0], 1.0, beta=1.0) == pytest.approx(-0.5)
    with pytest.raises(DomainError):
        energy_score_empirical([], 0.0)


def test_empirical_matches_brute_force_pairs():
    rng = np.random.default_rng(2)
    s = rng.normal(size=(40, 2))
    y = np.array([0.3, -0.1])
    beta = 1.3
    pair = sum(np.linalg.norm(a - b) ** beta for a in s for b in s) / (2 * 40**2)
    obs = sum(np.linalg.norm(a - y) ** beta for a in s) / 40
    assert energy_score_empirical(s, y, beta) == pytest.approx(pair - obs, rel=1e-12)


def test_empirical_vs_monte_carlo():
    draws = NORMAL(0.0, 1.0).sample(make_stream(11), 10_000)
    emp = energy_score_empirical(draws, 0.4, 1.0)
    mc = energy_score(NORMAL(0.0, 1.0), 0.4, EnergyConfig(beta=1.0, mc_pairs=1_000_000), make_stream(12))
    assert abs(emp - mc) < 0.01


@pytest.mark.parametrize("y", [0.0, 0.5, 1.0])
def test_crps_uniform_quadrature(y):
    crps, _ = integrate.quad(lambda t: (t - (t >= y)) ** 2, 0, 1, points=[y])
    s = energy_score(_Uniform01(), y, EnergyConfig(beta=1.0, mc_pairs=200_000), make_stream(4))
    # mean of |U - U'| and |U - y| has sd below 0.5; the antithetic pairs only help
    assert abs(-s - crps) < 3 * 0.5 / math.sqrt(200_000)


@settings(max_examples=20, deadline=None)
@given(shift=st.floats(-50, 50), y=st.floats(-3, 3), beta=st.sampled_from([0.5, 1.0, 1.5]))
def test_energy_translation_invariance(shift, y, beta):
    cfg = EnergyConfig(beta=beta, mc_pairs=4000)
    a = energy_score(NORMAL(0.0, 1.3), y, cfg, make_stream(8))
    b = energy_score(NORMAL(shift, 1.3), y + shift, cfg, make_stream(8))
    assert a == pytest.approx(b, abs=1e-9 * (1 + abs(shift)) ** beta)


@pytest.mark.parametrize("beta", [1.0, 1.5])
def test_energy_upper_bound_normal_grid(beta):
    # E|Y|^beta for N(mu, s) is bounded on the grid by its value at the largest |mu| and s
    grid = [(mu, s) for mu in np.linspace(-1, 1, 5) for s in np.linspace(0.5, 2, 4)]
    m = max(integrate.quad(lambda t: abs(t) ** beta * math.exp(NORMAL.logpdf((mu, s), t)), -np.inf, np.inf)[0] for mu, s in grid)
    ys = np.linspace(-5, 5, 21)
    cfg = EnergyConfig(beta=beta, mc_pairs=20_000)
    best = max(energy_score(NORMAL(mu, s), y, cfg, make_stream(1, i)) for i, (mu, s) in enumerate(grid) for y in ys)
    assert best <= 2 ** (beta - 1) * m


def test_energy_evaluator_matches_generic_path():
    y = np.array([-0.5, 0.2, 1.7])
    rule = EnergyScore(beta=1.0, mc_size=4096, seed=3)
    ls = rule.evaluator(NORMAL, y)((np.array([0.0, 0.1, 0.2]), np.array([1.0, 1.5, 2.0])))
    mc = [energy_score(NORMAL(m, s), yy, EnergyConfig(1.0, 200_000), make_stream(9, i))
          for i, (m, s, yy) in enumerate(zip([0.0, 0.1, 0.2], [1.0, 1.5, 2.0], y))]
    assert np.allclose(ls, mc, atol=0.02)


def test_energy_evaluator_generic_family():
    y = np.array([0.1, 1.0])
    ev = EnergyScore(beta=1.0, mc_size=20_000, seed=1).evaluator(GEV, y)
    vals = ev((np.zeros(2), np.ones(2), np.full(2, 0.1)))
    mc = [energy_score(GEV(0.0, 1.0, 0.1), yy, EnergyConfig(1.0, 200_000), make_stream(2, i)) for i, yy in enumerate(y)]
    assert np.allclose(vals, mc, atol=0.03)


def test_energy_evaluator_point_mass_family():
    y = np.array([0.0, 1.0, 3.0])
    vals = EnergyScore(beta=1.0, mc_size=64).evaluator(POINT_MASS, y)((np.full(3, 1.0),))
    assert np.allclose(vals, [-1.0, 0.0, -2.0])


def test_make_rule_names():
    assert isinstance(make_rule("mle"), LogScore)
    assert isinstance(make_rule("log"), LogScore)
    assert make_rule("crps").beta == 1.0
    assert make_rule("energy", beta=0.5).beta == 0.5
    with pytest.raises(DomainError):
        make_rule("brier")
    with pytest.raises(DomainError):
        make_rule("log", beta=1.0)


def test_gap_identical_is_zero():
    for rule in (LogScore(), EnergyScore(beta=1.0)):
        g = propriety_gap(rule, NORMAL(0.0, 1.0), NORMAL(0.0, 1.0), 1000, make_stream(0))
        assert g.value == 0.0


def test_gap_log_normal_kl():
    g = propriety_gap(LogScore(), NORMAL(0.0, 1.0), NORMAL(1.0, 1.0), 100_000, make_stream(1))
    # antithetic pairing cancels the linear term, so the estimate is exact
    assert g.value == pytest.approx(0.5, abs=1e-12)


def test_gap_log_gev_kl_quadrature():
    p, q = GEV(0.0, 1.0, 0.1), GEV(0.2, 1.2, 0.0)
    kl, _ = integrate.quad(lambda y: math.exp(p.logpdf(y)) * (p.logpdf(y) - q.logpdf(y)), -3, 60, limit=200)
    g = propriety_gap(LogScore(), p, q, 100_000, make_stream(2))
    assert abs(g.value - kl) < 3 * g.se + 1e-3


def test_gap_energy_point_masses():
    g = propriety_gap(EnergyScore(beta=1.0), POINT_MASS(0.0), POINT_MASS(1.0), 100, make_stream(0))
    assert g.value == pytest.approx(1.0, abs=1e-12)


def test_gap_support_mismatch_is_infinite():
    g = propriety_gap(LogScore(), GEV(0.0, 1.0, 0.2), GEV(0.0, 1.0, -0.5), 1000, make_stream(3))
    assert g.value == math.inf


@pytest.mark.parametrize("rule", [LogScore(), EnergyScore(beta=1.0)])
def test_propriety_sweep_small(rule):
    rep = propriety_sweep(rule, NORMAL, [-1, 0.5], [1, 2], n_pairs=10, mc_size=20_000, seed=4)
    assert rep.passed, rep.failures


def test_sweep_criterion_rejects_negated_gaps():
    # the sweep's acceptance rule must fail for a rule with the opposite orientation
    rep = propriety_sweep(LogScore(), NORMAL, [-1, 0.5], [1, 2], n_pairs=5, mc_size=5000, seed=1)
    negated_ok = [-r.gap >= -3 * r.se and (r.distance <= 0.1 or -r.gap > 3 * r.se) for r in rep.rows]
    assert not any(negated_ok)


def test_gap_unbounded_below_against_bounded_below():
    # P has an unbounded lower tail, P' starts at 0.606 - 0.747/0.181; sampling alone
    # only sees huge finite values near that endpoint
    p, q = GEV(-0.709, 0.651, -0.264), GEV(0.606, 0.747, 0.181)
    assert propriety_gap(LogScore(), p, q, 1000, make_stream(4)).value == math.inf
    # a nested pair stays finite: GEV(0, 1, 0.1) lives inside the Gumbel support
    assert math.isfinite(propriety_gap(LogScore(), GEV(0.0, 1.0, 0.1), GEV(0.0, 1.0, 0.0), 1000, make_stream(4)).value)


def test_sweep_counts_infinite_gap_as_strict():
    # GEV pairs with different support endpoints give an infinite log-score gap
    rep = propriety_sweep(LogScore(), GEV, [-1, 0.5, -0.4], [1, 2, 0.4], n_pairs=20, mc_size=20_000, seed=1)
    assert any(r.gap == math.inf for r in rep.rows)
    assert rep.passed
