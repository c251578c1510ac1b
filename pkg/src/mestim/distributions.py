"""Parametric families with parameter-dependent supports.

All densities are evaluated on the log scale.  Outside the support the
log-density is ``-inf`` (IEEE negative infinity), never a large negative
surrogate, so that sums of log-densities propagate the support violation.
Samplers use the inverse cdf on open uniforms, which keeps every draw strictly
inside the support.

Every function broadcasts over numpy arrays: ``theta`` may hold one parameter
vector or one per observation.  Scalars in give Python floats out.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy import special

from .streams import as_stream, open_uniform

XI_ZERO_TOL = 1e-8
_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


class DomainError(ValueError):
    """Invalid parameter or argument for a family."""


class GevParams(NamedTuple):
    mu: float
    sigma: float
    xi: float


class GpParams(NamedTuple):
    a: float
    xi: float


class FrechetParams(NamedTuple):
    tau: float
    alpha: float


class NormalParams(NamedTuple):
    mean: float
    sd: float


class PointMassParams(NamedTuple):
    loc: float


def _floats(*args):
    arrs = np.broadcast_arrays(*[np.asarray(a, dtype=float) for a in args])
    return [np.array(a, dtype=float) for a in arrs]


def _out(x: np.ndarray):
    if np.ndim(x) == 0:
        return float(x)
    return x


def _require(ok, msg: str) -> None:
    if not np.all(ok):
        raise DomainError(msg)


def _check_y(y: np.ndarray) -> None:
    _require(np.isfinite(y), "observation must be finite")


def _check_p(p: np.ndarray) -> None:
    _require((p > 0) & (p < 1), "probability must lie in the open interval (0, 1)")


def _gumbel_mask(xi: np.ndarray) -> np.ndarray:
    return np.abs(xi) <= XI_ZERO_TOL


# --------------------------------------------------------------------------
# GEV


def check_gev(theta) -> None:
    mu, sigma, xi = (np.asarray(v, dtype=float) for v in theta)
    _require(np.isfinite(mu) & np.isfinite(xi), "GEV location and shape must be finite")
    _require(np.isfinite(sigma) & (sigma > 0), "GEV scale must be positive")


def gev_logpdf(theta, y):
    """Log-density of the GEV distribution; ``-inf`` off the support.

    The support is ``{y : sigma + xi * (y - mu) > 0}``.  Shapes with
    ``|xi| <= XI_ZERO_TOL`` use the Gumbel branch.
    """
    check_gev(theta)
    y, mu, sigma, xi = _floats(y, *theta)
    _check_y(y)
    z = (y - mu) / sigma
    out = np.full(z.shape, -np.inf)
    gum = _gumbel_mask(xi)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        zg = z[gum]
        out[gum] = -np.log(sigma[gum]) - zg - np.exp(-zg)
        ok = ~gum & (1.0 + xi * z > 0)
        x, s = xi[ok], sigma[ok]
        log_t = np.log1p(x * z[ok])
        out[ok] = -np.log(s) - (1.0 + 1.0 / x) * log_t - np.exp(-log_t / x)
    out[np.isnan(out)] = -np.inf
    # the endpoint mu - sigma/xi can round to just inside 1 + xi z > 0
    lower, upper = gev_support(theta)
    out[(y <= lower) | (y >= upper)] = -np.inf
    return _out(out)


def gev_cdf(theta, y):
    check_gev(theta)
    y, mu, sigma, xi = _floats(y, *theta)
    _require(~np.isnan(y), "observation must not be NaN")
    z = (y - mu) / sigma
    out = np.empty(z.shape)
    gum = _gumbel_mask(xi)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        out[gum] = np.exp(-np.exp(-z[gum]))
        inside = ~gum & (1.0 + xi * z > 0)
        log_t = np.log1p(xi[inside] * z[inside])
        out[inside] = np.exp(-np.exp(-log_t / xi[inside]))
    outside = ~gum & ~inside
    # below a lower endpoint when xi > 0, above an upper endpoint when xi < 0
    out[outside] = np.where(xi[outside] > 0, 0.0, 1.0)
    return _out(out)


def gev_quantile(theta, p):
    check_gev(theta)
    p, mu, sigma, xi = _floats(p, *theta)
    _check_p(p)
    w = np.log(-np.log(p))
    gum = _gumbel_mask(xi)
    safe_xi = np.where(gum, 1.0, xi)
    q = np.where(gum, -w, np.expm1(-safe_xi * w) / safe_xi)
    return _out(mu + sigma * q)


def gev_support(theta):
    """Open support interval ``(lower, upper)``."""
    check_gev(theta)
    mu, sigma, xi = _floats(*theta)
    gum = _gumbel_mask(xi)
    safe_xi = np.where(gum, 1.0, xi)
    end = mu - sigma / safe_xi
    lower = np.where(~gum & (xi > 0), end, -np.inf)
    upper = np.where(~gum & (xi < 0), end, np.inf)
    return _out(lower), _out(upper)


def gev_sample(theta, rng, count: int):
    _require(count >= 0, "count must be nonnegative")
    rng = as_stream(rng)
    return gev_quantile(theta, open_uniform(rng, count))


def gev_logpdf_grad(theta, y):
    """Partial derivatives of ``gev_logpdf`` in ``(mu, sigma, xi)``.

    Rows of the result follow the parameter order; entries off the support
    are NaN.
    """
    check_gev(theta)
    y, mu, sigma, xi = _floats(y, *theta)
    z = (y - mu) / sigma
    gum = _gumbel_mask(xi)
    d_mu = np.full(z.shape, np.nan)
    d_sigma = np.full(z.shape, np.nan)
    d_xi = np.full(z.shape, np.nan)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        zg, sg = z[gum], sigma[gum]
        ez = np.exp(-zg)
        dz = -1.0 + ez
        d_mu[gum] = -dz / sg
        d_sigma[gum] = -1.0 / sg - dz * zg / sg
        d_xi[gum] = 0.5 * zg**2 * (1.0 - ez) - zg
        ok = ~gum & (1.0 + xi * z > 0)
        x, s, zz = xi[ok], sigma[ok], z[ok]
        t = 1.0 + x * zz
        log_t = np.log1p(x * zz)
        u = np.exp(-log_t / x)
        dz = -(x + 1.0) / t + u / t
        d_mu[ok] = -dz / s
        d_sigma[ok] = -1.0 / s - dz * zz / s
        d_xi[ok] = (
            log_t / x**2
            - (1.0 + 1.0 / x) * zz / t
            - u * (log_t / x**2 - zz / (x * t))
        )
    return np.stack([d_mu, d_sigma, d_xi])


# --------------------------------------------------------------------------
# Generalized Pareto


def check_gp(theta) -> None:
    a, xi = (np.asarray(v, dtype=float) for v in theta)
    _require(np.isfinite(a) & (a > 0), "GP scale must be positive")
    _require(np.isfinite(xi), "GP shape must be finite")


def gp_logpdf(theta, y):
    """Log-density of the GP distribution on ``(0, inf)``; ``-inf`` off support."""
    check_gp(theta)
    y, a, xi = _floats(y, *theta)
    _check_y(y)
    out = np.full(y.shape, -np.inf)
    pos = y > 0
    gum = _gumbel_mask(xi)
    with np.errstate(divide="ignore", invalid="ignore"):
        e = pos & gum
        out[e] = -np.log(a[e]) - y[e] / a[e]
        ok = pos & ~gum & (1.0 + xi * y / a > 0)
        x, s = xi[ok], a[ok]
        out[ok] = -np.log(s) - (1.0 + 1.0 / x) * np.log1p(x * y[ok] / s)
    out[np.isnan(out)] = -np.inf
    out[y >= gp_support(theta)[1]] = -np.inf
    return _out(out)


def gp_cdf(theta, y):
    check_gp(theta)
    y, a, xi = _floats(y, *theta)
    _require(~np.isnan(y), "observation must not be NaN")
    out = np.zeros(y.shape)
    pos = y > 0
    gum = _gumbel_mask(xi)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        e = pos & gum
        out[e] = -np.expm1(-y[e] / a[e])
        inside = pos & ~gum & (1.0 + xi * y / a > 0)
        x = xi[inside]
        out[inside] = -np.expm1(-np.log1p(x * y[inside] / a[inside]) / x)
    out[pos & ~gum & ~inside] = 1.0
    out[np.isposinf(y)] = 1.0
    return _out(out)


def gp_quantile(theta, p):
    check_gp(theta)
    p, a, xi = _floats(p, *theta)
    _check_p(p)
    w = np.log1p(-p)
    gum = _gumbel_mask(xi)
    safe_xi = np.where(gum, 1.0, xi)
    q = np.where(gum, -w, np.expm1(-safe_xi * w) / safe_xi)
    return _out(a * q)


def gp_support(theta):
    check_gp(theta)
    a, xi = _floats(*theta)
    with np.errstate(over="ignore"):
        upper = np.where(~_gumbel_mask(xi) & (xi < 0), -a / np.where(xi < 0, xi, -1.0), np.inf)
    return _out(np.zeros_like(a)), _out(upper)


def gp_sample(theta, rng, count: int):
    _require(count >= 0, "count must be nonnegative")
    return gp_quantile(theta, open_uniform(as_stream(rng), count))


def gp_logpdf_grad(theta, y):
    check_gp(theta)
    y, a, xi = _floats(y, *theta)
    d_a = np.full(y.shape, np.nan)
    d_xi = np.full(y.shape, np.nan)
    pos = y > 0
    gum = _gumbel_mask(xi)
    with np.errstate(divide="ignore", invalid="ignore"):
        e = pos & gum
        w = y[e] / a[e]
        d_a[e] = (-1.0 + w) / a[e]
        d_xi[e] = 0.5 * w**2 - w
        ok = pos & ~gum & (1.0 + xi * y / a > 0)
        x, s, yy = xi[ok], a[ok], y[ok]
        t = 1.0 + x * yy / s
        d_a[ok] = -1.0 / s + (x + 1.0) * yy / (s**2 * t)
        d_xi[ok] = np.log1p(x * yy / s) / x**2 - (1.0 + 1.0 / x) * (yy / s) / t
    return np.stack([d_a, d_xi])


# --------------------------------------------------------------------------
# Frechet


def check_frechet(theta) -> None:
    tau, alpha = (np.asarray(v, dtype=float) for v in theta)
    _require(np.isfinite(tau) & (tau > 0), "Frechet scale must be positive")
    _require(np.isfinite(alpha) & (alpha > 0), "Frechet shape must be positive")


def frechet_logpdf(theta, y):
    """``log(alpha/tau) - (alpha+1) log(y/tau) - (y/tau)**-alpha`` for y > 0."""
    check_frechet(theta)
    y, tau, alpha = _floats(y, *theta)
    _check_y(y)
    out = np.full(y.shape, -np.inf)
    ok = y > 0
    with np.errstate(over="ignore"):
        log_s = np.log(y[ok] / tau[ok])
        al = alpha[ok]
        out[ok] = np.log(al) - np.log(tau[ok]) - (al + 1.0) * log_s - np.exp(-al * log_s)
    return _out(out)


def frechet_cdf(theta, y):
    check_frechet(theta)
    y, tau, alpha = _floats(y, *theta)
    _require(~np.isnan(y), "observation must not be NaN")
    out = np.zeros(y.shape)
    ok = y > 0
    with np.errstate(over="ignore", divide="ignore"):
        out[ok] = np.exp(-np.exp(-alpha[ok] * np.log(y[ok] / tau[ok])))
    return _out(out)


def frechet_quantile(theta, p):
    check_frechet(theta)
    p, tau, alpha = _floats(p, *theta)
    _check_p(p)
    return _out(tau * np.exp(-np.log(-np.log(p)) / alpha))


def frechet_support(theta):
    check_frechet(theta)
    tau, _ = _floats(*theta)
    return _out(np.zeros_like(tau)), _out(np.full_like(tau, np.inf))


def frechet_sample(theta, rng, count: int):
    _require(count >= 0, "count must be nonnegative")
    return frechet_quantile(theta, open_uniform(as_stream(rng), count))


def frechet_logpdf_grad(theta, y):
    check_frechet(theta)
    y, tau, alpha = _floats(y, *theta)
    d_tau = np.full(y.shape, np.nan)
    d_alpha = np.full(y.shape, np.nan)
    ok = y > 0
    log_s = np.log(y[ok] / tau[ok])
    al = alpha[ok]
    w = np.exp(-al * log_s)
    d_tau[ok] = al * (1.0 - w) / tau[ok]
    d_alpha[ok] = 1.0 / al - log_s + w * log_s
    return np.stack([d_tau, d_alpha])


# --------------------------------------------------------------------------
# Normal


def check_normal(theta) -> None:
    mean, sd = (np.asarray(v, dtype=float) for v in theta)
    _require(np.isfinite(mean), "normal mean must be finite")
    _require(np.isfinite(sd) & (sd > 0), "normal sd must be positive")


def normal_logpdf(theta, y):
    check_normal(theta)
    y, mean, sd = _floats(y, *theta)
    _check_y(y)
    z = (y - mean) / sd
    return _out(-_LOG_SQRT_2PI - np.log(sd) - 0.5 * z * z)


def normal_cdf(theta, y):
    check_normal(theta)
    y, mean, sd = _floats(y, *theta)
    return _out(special.ndtr((y - mean) / sd))


def normal_quantile(theta, p):
    check_normal(theta)
    p, mean, sd = _floats(p, *theta)
    _check_p(p)
    return _out(mean + sd * special.ndtri(p))


def normal_support(theta):
    check_normal(theta)
    mean, _ = _floats(*theta)
    return _out(np.full_like(mean, -np.inf)), _out(np.full_like(mean, np.inf))


def normal_sample(theta, rng, count: int):
    _require(count >= 0, "count must be nonnegative")
    return normal_quantile(theta, open_uniform(as_stream(rng), count))


def normal_logpdf_grad(theta, y):
    check_normal(theta)
    y, mean, sd = _floats(y, *theta)
    r = y - mean
    return np.stack([r / sd**2, -1.0 / sd + r**2 / sd**3])


# --------------------------------------------------------------------------
# Point mass (no density; used with the energy score)


def check_point_mass(theta) -> None:
    (loc,) = (np.asarray(v, dtype=float) for v in theta)
    _require(np.isfinite(loc), "point-mass location must be finite")


def _point_mass_logpdf(theta, y):
    raise DomainError("a point mass has no Lebesgue density")


def _point_mass_cdf(theta, y):
    check_point_mass(theta)
    y, loc = _floats(y, *theta)
    return _out((y >= loc).astype(float))


def _point_mass_quantile(theta, p):
    check_point_mass(theta)
    p, loc = _floats(p, *theta)
    _check_p(p)
    return _out(loc)


def _point_mass_support(theta):
    check_point_mass(theta)
    (loc,) = _floats(*theta)
    return _out(loc), _out(loc)


# --------------------------------------------------------------------------
# Family registry


def _no_grad(theta, y):
    raise DomainError("no gradient available")


@dataclass(frozen=True)
class Family:
    """A parametric family of univariate distributions.

    ``location_scale``, when set, maps ``theta`` to ``(loc, scale)`` such that
    ``quantile(theta, p) == loc + scale * std_quantile(p)``; the energy-score
    criterion uses it to reuse standardized draws across parameters.
    """

    name: str
    param_names: tuple
    params_type: type
    check: Callable
    logpdf: Callable
    cdf: Callable
    quantile: Callable
    support: Callable
    logpdf_grad: Callable = _no_grad
    estimation_check: Optional[Callable] = None
    location_scale: Optional[Callable] = None
    std_quantile: Optional[Callable] = None

    @property
    def n_params(self) -> int:
        return len(self.param_names)

    def sample(self, theta, rng, count: int):
        _require(count >= 0, "count must be nonnegative")
        return self.quantile(theta, open_uniform(as_stream(rng), count))

    def in_support(self, theta, y):
        lower, upper = self.support(theta)
        y = np.asarray(y, dtype=float)
        if self.name == "point-mass":
            return _out(y == lower)
        return _out((y > lower) & (y < upper))

    def check_estimation(self, theta) -> None:
        """Validate ``theta`` for use inside an estimator."""
        self.check(theta)
        if self.estimation_check is not None:
            self.estimation_check(theta)

    def __call__(self, *theta) -> "Frozen":
        return Frozen(self, self.params_type(*theta))


def _xi_above_minus_one(theta) -> None:
    xi = np.asarray(theta[-1], dtype=float)
    _require(xi > -1.0, "shape must exceed -1 in estimation contexts")


GEV = Family(
    name="gev",
    param_names=("mu", "sigma", "xi"),
    params_type=GevParams,
    check=check_gev,
    logpdf=gev_logpdf,
    cdf=gev_cdf,
    quantile=gev_quantile,
    support=gev_support,
    logpdf_grad=gev_logpdf_grad,
    estimation_check=_xi_above_minus_one,
)

GP = Family(
    name="gp",
    param_names=("a", "xi"),
    params_type=GpParams,
    check=check_gp,
    logpdf=gp_logpdf,
    cdf=gp_cdf,
    quantile=gp_quantile,
    support=gp_support,
    logpdf_grad=gp_logpdf_grad,
    estimation_check=_xi_above_minus_one,
)

FRECHET = Family(
    name="frechet",
    param_names=("tau", "alpha"),
    params_type=FrechetParams,
    check=check_frechet,
    logpdf=frechet_logpdf,
    cdf=frechet_cdf,
    quantile=frechet_quantile,
    support=frechet_support,
    logpdf_grad=frechet_logpdf_grad,
)

NORMAL = Family(
    name="normal",
    param_names=("mean", "sd"),
    params_type=NormalParams,
    check=check_normal,
    logpdf=normal_logpdf,
    cdf=normal_cdf,
    quantile=normal_quantile,
    support=normal_support,
    logpdf_grad=normal_logpdf_grad,
    location_scale=lambda theta: (theta[0], theta[1]),
    std_quantile=special.ndtri,
)

POINT_MASS = Family(
    name="point-mass",
    param_names=("loc",),
    params_type=PointMassParams,
    check=check_point_mass,
    logpdf=_point_mass_logpdf,
    cdf=_point_mass_cdf,
    quantile=_point_mass_quantile,
    support=_point_mass_support,
    location_scale=lambda theta: (theta[0], np.ones_like(np.asarray(theta[0], dtype=float))),
    std_quantile=np.zeros_like,
)

FAMILIES = {f.name: f for f in (GEV, GP, FRECHET, NORMAL, POINT_MASS)}


def get_family(name: str) -> Family:
    try:
        return FAMILIES[name]
    except KeyError:
        raise DomainError(f"unknown family {name!r}; choose from {sorted(FAMILIES)}") from None


# --------------------------------------------------------------------------
# Distributions as objects


@dataclass(frozen=True)
class Frozen:
    """A family member with fixed parameters."""

    family: Family
    theta: tuple

    def __post_init__(self):
        self.family.check(self.theta)

    def logpdf(self, y):
        return self.family.logpdf(self.theta, y)

    def cdf(self, y):
        return self.family.cdf(self.theta, y)

    def quantile(self, p):
        return self.family.quantile(self.theta, p)

    def support(self):
        return self.family.support(self.theta)

    def sample(self, rng, size: int):
        return np.asarray(self.family.sample(self.theta, rng, size), dtype=float)


class Discrete:
    """Finitely supported distribution on R^d with optional weights."""

    def __init__(self, atoms, weights=None):
        atoms = np.asarray(atoms, dtype=float)
        if atoms.ndim == 0:
            atoms = atoms.reshape(1)
        if atoms.shape[0] == 0:
            raise DomainError("a discrete distribution needs at least one atom")
        if weights is None:
            weights = np.full(atoms.shape[0], 1.0 / atoms.shape[0])
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (atoms.shape[0],) or np.any(weights < 0):
            raise DomainError("weights must be nonnegative, one per atom")
        total = weights.sum()
        if not total > 0:
            raise DomainError("weights must not all be zero")
        self.atoms = atoms
        self.weights = weights / total

    def sample(self, rng, size: int):
        idx = as_stream(rng).choice(self.atoms.shape[0], size=size, p=self.weights)
        return self.atoms[idx]


def point_mass(a) -> Discrete:
    return Discrete([a] if np.ndim(a) == 0 else [np.asarray(a, dtype=float)])
