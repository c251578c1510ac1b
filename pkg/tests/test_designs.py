import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mestim.designs import (
    UNIFORM,
    LinkError,
    LinkSpec,
    check_identifiability,
    constant_design,
    file_design,
    generate_row,
    gev_constant,
    gev_loglinear,
    halton_design,
    loglinear_scale,
    normal_constant_mean,
    normal_linear_mean,
    normal_redundant_mean,
    read_covariates,
    uniform_design,
)
from mestim.distributions import GEV, NORMAL, DomainError


def test_uniform_design_values():
    assert uniform_design(4).tolist() == [0.25, 0.5, 0.75, 1.0]
    assert uniform_design(1).tolist() == [1.0]
    with pytest.raises(DomainError):
        uniform_design(0)


def test_uniform_design_ecdf_distance():
    n = 1000
    x = uniform_design(n)
    t = np.linspace(0, 1, 10_001)
    ecdf = np.searchsorted(x, t, side="right") / n
    assert np.max(np.abs(ecdf - t)) <= 1 / n + 1e-12


def test_loglinear_scale_values():
    assert loglinear_scale([0.0], [3.0]) == 1.0
    assert loglinear_scale([1.0], [0.5]) == pytest.approx(1.648721, abs=1e-6)
    with pytest.raises(DomainError):
        loglinear_scale([1.0, 2.0], [0.5])


@settings(max_examples=50, deadline=None)
@given(
    b=st.lists(st.floats(-3, 3), min_size=2, max_size=2),
    x=st.lists(st.floats(0.01, 2), min_size=2, max_size=2),
    bump=st.floats(0.01, 1),
)
def test_loglinear_scale_monotone_and_positive(b, x, bump):
    v = loglinear_scale(b, x)
    assert v > 0
    b2 = [b[0] + bump, b[1]]
    assert loglinear_scale(b2, x) > v


def test_loglinear_scale_continuous_on_segments():
    rng = np.random.default_rng(1)
    for _ in range(20):
        beta = rng.uniform(-2, 2, 2)
        x = rng.uniform(-1, 1, (50, 2))
        jump = np.abs(loglinear_scale(beta + 1e-6, x) - loglinear_scale(beta, x))
        assert np.max(jump) < 1e-4


def test_generate_row_normal_means():
    link = normal_linear_mean(sd=1e-9)
    row = generate_row(UNIFORM, link, [2.0], 4, seed=3)
    assert np.allclose(row.responses, 2.0 * np.array([0.25, 0.5, 0.75, 1.0]), atol=1e-7)
    assert row.n == 4 and row.covariates.shape == (4, 1)


def test_generate_row_deterministic():
    link = gev_loglinear()
    a = generate_row(UNIFORM, link, [0.5, 1.0, 0.0, 0.5, 0.1], 50, seed=9)
    b = generate_row(UNIFORM, link, [0.5, 1.0, 0.0, 0.5, 0.1], 50, seed=9)
    assert a.responses.tobytes() == b.responses.tobytes()


def test_generate_row_respects_gev_endpoint():
    row = generate_row(UNIFORM, gev_constant(), [0.0, 1.0, -0.5], 2000, seed=5)
    assert np.all(row.responses < 0.0 + 2 * 1.0)


def test_link_error_names_index():
    # sd = exp(s0 + s1 x) fine; xi <= -1 only at the last covariate
    link = LinkSpec(
        name="bad-xi",
        family=GEV,
        n_params=1,
        fn=lambda x, eta: (np.zeros(x.shape[0]), np.ones(x.shape[0]), eta[0] - 2 * x[:, 0]),
    )
    with pytest.raises(LinkError) as exc:
        generate_row(UNIFORM, link, [0.5], 4, seed=1)
    # xi = 0.5 - 2 i/4 <= -1 first at i = 3 (x = 0.75): index 2
    assert exc.value.index == 2
    assert "index 2" in str(exc.value)


def test_generate_row_mean_matches_integral():
    link = normal_linear_mean(sd=1.0)
    n = 100_000
    row = generate_row(UNIFORM, link, [2.0], n, seed=12)
    # mean link 2x integrates to 1 under Uniform(0, 1]; the design mean is (n+1)/n
    target = 2.0 * (n + 1) / (2 * n)
    assert abs(row.responses.mean() - target) < 3.0 / math.sqrt(n)


def test_rows_with_distinct_seeds_uncorrelated():
    link = normal_constant_mean(sd=1.0)
    a = generate_row(UNIFORM, link, [0.0], 10_000, seed=1).responses
    b = generate_row(UNIFORM, link, [0.0], 10_000, seed=2).responses
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.02


def test_identifiability_loglinear_scale():
    link = LinkSpec(
        name="scale-only",
        family=NORMAL,
        n_params=1,
        fn=lambda x, eta: (np.zeros(x.shape[0]), np.exp(eta[0] * x[:, 0])),
    )
    grid = np.linspace(-1, 1, 21)[:, None]
    rep = check_identifiability(link, UNIFORM, [0.3], grid)
    assert rep.identified
    assert np.all(rep.masses[~rep.is_reference] == 1.0)


def test_identifiability_constant_injective():
    rep = check_identifiability(normal_constant_mean(), UNIFORM, [0.0], np.linspace(-1, 1, 11)[:, None])
    assert rep.identified


def test_identifiability_link_ignoring_eta():
    link = LinkSpec(name="flat", family=NORMAL, n_params=1, fn=lambda x, eta: (np.zeros(x.shape[0]), np.ones(x.shape[0])))
    grid = np.linspace(-1, 1, 11)[:, None]
    rep = check_identifiability(link, UNIFORM, [0.0], grid)
    assert not rep.identified
    assert len(rep.violations) == 10


def test_identifiability_redundant_mean():
    rep = check_identifiability(normal_redundant_mean(), UNIFORM, [0.5, 0.5], [[0.3, 0.7], [0.5, 0.6]])
    assert len(rep.violations) == 1
    assert np.allclose(rep.violations[0], [0.3, 0.7])


def test_halton_design_fills_box():
    d = halton_design([0, -1], [1, 1])
    x = d.points(4096)
    assert x.shape == (4096, 2)
    assert np.all((x[:, 0] >= 0) & (x[:, 0] <= 1) & (x[:, 1] >= -1) & (x[:, 1] <= 1))
    assert np.array_equal(d.points(10), d.points(20)[:10])
    assert abs(x[:, 0].mean() - 0.5) < 0.01


def test_constant_design():
    d = constant_design([0.2, 0.4])
    assert np.array_equal(d.points(3), np.tile([0.2, 0.4], (3, 1)))


def test_read_covariates(tmp_path):
    p = tmp_path / "cov.csv"
    p.write_text("x0,x1\n0.1,0.2\n\n0.3,0.4\n")
    assert read_covariates(p).tolist() == [[0.1, 0.2], [0.3, 0.4]]
    p.write_text("0.1 0.2\n0.3 inf\n")
    with pytest.raises(DomainError, match=":2:"):
        read_covariates(p)
    p.write_text("0.1 0.2\n0.3\n")
    with pytest.raises(DomainError, match=":2:"):
        read_covariates(p)


def test_file_design_rows(tmp_path):
    p = tmp_path / "cov.txt"
    p.write_text("\n".join(str(v) for v in range(1, 11)))
    d = file_design(p)
    assert d.points(5)[:, 0].tolist() == [2.0, 4.0, 6.0, 8.0, 10.0]
    assert d.points(10)[:, 0].tolist() == list(map(float, range(1, 11)))
