"""Heteroscedastic heavy-tailed block maxima and Frechet regression fits.

Underlying observations at covariate ``x`` have cdf ``F_x = F_0 ** c(x)``,
with ``F_0`` in the Frechet max-domain of attraction, and
``c(x) = sigma_beta0(x) ** alpha0``.  A block maximum of ``r`` draws then has
cdf ``F_0 ** (c(x) r)`` exactly, so one inverse-cdf draw per block replaces
``r`` draws.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .designs import CovariateDesign, DesignRow, frechet_scale_link, loglinear_scale
from .distributions import DomainError, frechet_logpdf
from .estimator import BoxDomain, Criterion, FitResult, MaximizeConfig, log_score_criterion, maximize
from .streams import make_stream, open_uniform


# --------------------------------------------------------------------------
# baselines


@dataclass(frozen=True)
class ParetoBaseline:
    """``F_0(y) = 1 - y**-alpha`` for ``y >= 1``; norming ``a_r = r**(1/alpha)``."""

    alpha: float
    name: str = "pareto"

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise DomainError(f"tail index must be positive, got {self.alpha}")

    def tail(self, y):
        y = np.asarray(y, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(y >= 1.0, np.power(np.maximum(y, 1.0), -self.alpha), 1.0)

    def cdf(self, y):
        return 1.0 - self.tail(y)

    def tail_quantile(self, q):
        """Solve ``1 - F_0(y) = q`` for ``q`` in (0, 1]."""
        return np.power(np.asarray(q, dtype=float), -1.0 / self.alpha)

    def quantile(self, p):
        return self.tail_quantile(1.0 - np.asarray(p, dtype=float))

    def norming(self, r):
        """``a_r``, the ``1 - 1/r`` quantile of ``F_0``."""
        return np.power(np.asarray(r, dtype=float), 1.0 / self.alpha)


@dataclass(frozen=True)
class LogPerturbedBaseline:
    """``F_0(y) = 1 - y**-alpha / log(e + y)`` above the point where it vanishes.

    The slowly varying factor keeps ``F_0`` in the Frechet domain of
    attraction with index ``alpha`` while making the block-maxima
    approximation inexact at every finite ``r``.  Quantiles and the norming
    constant are computed by Newton iteration on ``log y``.
    """

    alpha: float
    name: str = "log-perturbed"

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise DomainError(f"tail index must be positive, got {self.alpha}")

    @property
    def lower_endpoint(self) -> float:
        return float(self.tail_quantile(1.0))

    def _log_tail(self, s):
        # s = log y
        return -self.alpha * s - np.log(np.log(np.e + np.exp(s)))

    def tail(self, y):
        y = np.asarray(y, dtype=float)
        y0 = self.lower_endpoint
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.exp(self._log_tail(np.log(np.maximum(y, y0))))
        return np.where(y > y0, t, 1.0)

    def cdf(self, y):
        return 1.0 - self.tail(y)

    def tail_quantile(self, q):
        q = np.asarray(q, dtype=float)
        target = np.log(q)
        s = -target / self.alpha
        for _ in range(60):
            ey = np.exp(s)
            g = self._log_tail(s) - target
            dg = -self.alpha - ey / ((np.e + ey) * np.log(np.e + ey))
            step = g / dg
            s = s - step
            if np.all(np.abs(step) < 1e-13 * np.maximum(1.0, np.abs(s))):
                break
        return np.exp(s)

    def quantile(self, p):
        return self.tail_quantile(1.0 - np.asarray(p, dtype=float))

    def norming(self, r):
        return self.tail_quantile(1.0 / np.asarray(r, dtype=float))


def pareto_baseline(alpha: float) -> ParetoBaseline:
    return ParetoBaseline(float(alpha))


BASELINES = {"pareto": ParetoBaseline, "log-perturbed": LogPerturbedBaseline}


# --------------------------------------------------------------------------
# tail model


@dataclass(frozen=True)
class TailModel:
    """Baseline ``F_0`` plus covariate tail scaling ``c(x) > 0``."""

    baseline: object
    c: Callable
    description: str = ""

    @property
    def alpha0(self) -> float:
        return self.baseline.alpha

    @classmethod
    def from_scale_link(cls, baseline, beta0, sigma_link: Callable = loglinear_scale) -> "TailModel":
        """``c(x) = sigma_link(beta0, x) ** alpha0``."""
        beta0 = np.atleast_1d(np.asarray(beta0, dtype=float))
        alpha = baseline.alpha

        def c(x):
            return np.asarray(sigma_link(beta0, _as_matrix(x)), dtype=float) ** alpha

        return cls(baseline=baseline, c=c, description=f"c(x) = sigma_{beta0.tolist()}(x)^{alpha}")

    def scale(self, x):
        """Limit Frechet scale ``sigma(x) = c(x) ** (1/alpha0)``."""
        return np.asarray(self.c(_as_matrix(x)), dtype=float) ** (1.0 / self.alpha0)


def _as_matrix(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        return x.reshape(1, 1)
    if x.ndim == 1:
        return x[:, None]
    return x


def _log_cdf(baseline, y):
    return np.log1p(-np.minimum(baseline.tail(y), 1.0))


def hetero_cdf(model: TailModel, x, y):
    """``F_x(y) = F_0(y) ** c(x)``."""
    c = np.asarray(model.c(_as_matrix(x)), dtype=float)
    with np.errstate(divide="ignore"):
        out = np.exp(c * _log_cdf(model.baseline, y))
    return out.item() if out.size == 1 and np.ndim(y) == 0 else out


def block_cdf(model: TailModel, x, y, r: int):
    """``F_x(y) ** r``, the cdf of a block maximum of size ``r``."""
    c = np.asarray(model.c(_as_matrix(x)), dtype=float)
    with np.errstate(divide="ignore"):
        out = np.exp(r * c * _log_cdf(model.baseline, y))
    return out


def frechet_limit_cdf(model: TailModel, x, y):
    """``Phi_alpha(y / sigma(x)) = exp(-c(x) y**-alpha)`` for ``y > 0``."""
    c = np.asarray(model.c(_as_matrix(x)), dtype=float)
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(y > 0, np.exp(-c * np.power(np.maximum(y, 1e-300), -model.alpha0)), 0.0)


# --------------------------------------------------------------------------
# block sizes


def block_size(rule, n: int) -> int:
    """Resolve a block-size rule for row ``n``.

    Accepts an integer (fixed size), a callable of ``n``, or one of the
    strings ``"(log n)^2"``, ``"log n"``, ``"sqrt n"``, ``"fixed:<k>"``.
    Results are rounded up and floored at 1.
    """
    if callable(rule):
        r = rule(n)
    elif isinstance(rule, (int, np.integer)):
        r = int(rule)
    else:
        key = re.sub(r"\s+", "", str(rule)).lower()
        if key in ("(logn)^2", "log2", "logn^2", "(logn)**2"):
            r = math.log(n) ** 2
        elif key in ("logn",):
            r = math.log(n)
        elif key in ("sqrtn", "sqrt(n)"):
            r = math.sqrt(n)
        elif key.startswith("fixed:"):
            r = int(key.split(":", 1)[1])
        else:
            raise DomainError(f"unknown block-size rule {rule!r}")
    return max(1, int(math.ceil(r)))


# --------------------------------------------------------------------------
# sampling


@dataclass(frozen=True)
class BlockMaxRow:
    n: int
    block_size: int
    covariates: np.ndarray
    maxima: np.ndarray
    seed: Optional[int] = None

    def as_design_row(self) -> DesignRow:
        return DesignRow(
            n=self.n,
            covariates=self.covariates,
            responses=self.maxima,
            seed=self.seed,
            kernel=f"block-maxima r={self.block_size}",
        )


def block_maxima_from_uniforms(model: TailModel, c: np.ndarray, u: np.ndarray, r: int) -> np.ndarray:
    # F_0(M) = U ** (1 / (c r))  <=>  1 - F_0(M) = -expm1(log U / (c r))
    q = -np.expm1(np.log(u) / (c * r))
    return np.asarray(model.baseline.tail_quantile(q), dtype=float)


def sample_block_maxima(
    model: TailModel,
    design: CovariateDesign,
    n: int,
    r: int,
    seed: int,
    materialize: bool = False,
) -> BlockMaxRow:
    """Row of ``n`` block maxima of size ``r`` at the design's covariates.

    The default path draws each maximum from ``F_x ** r`` by inverse cdf.
    ``materialize=True`` draws all ``r`` underlying observations instead
    (slow; for validation).
    """
    if n < 1 or r < 1:
        raise DomainError("n and the block size must be positive")
    x = design.points(n)
    c = np.asarray(model.c(x), dtype=float).reshape(n)
    if not np.all(np.isfinite(c) & (c > 0)):
        raise DomainError("tail scaling c(x) must be positive and finite")
    rng = make_stream(seed)
    if materialize:
        u = open_uniform(rng, (n, r))
        draws = model.baseline.tail_quantile(-np.expm1(np.log(u) / c[:, None]))
        maxima = np.max(draws, axis=1)
    else:
        maxima = block_maxima_from_uniforms(model, c, open_uniform(rng, n), r)
    return BlockMaxRow(n=int(n), block_size=int(r), covariates=x, maxima=maxima, seed=seed)


# --------------------------------------------------------------------------
# likelihood and fit


def frechet_loglik(tau, beta, alpha, row, sigma_link: Callable = loglinear_scale) -> float:
    """``(1/n) sum_i log p_{tau sigma_beta(x_i), alpha}(M_i)``; ``-inf`` if some ``M_i <= 0``."""
    if not (tau > 0 and alpha > 0):
        raise DomainError("tau and alpha must be positive")
    x = row.covariates
    m = row.maxima if isinstance(row, BlockMaxRow) else row.responses
    scale = tau * np.asarray(sigma_link(np.atleast_1d(beta), x), dtype=float)
    terms = np.asarray(frechet_logpdf((scale, alpha), m), dtype=float)
    if np.isneginf(terms).any():
        return -math.inf
    return math.fsum(terms.tolist()) / terms.size


def median_scaling(row) -> float:
    """Lower sample median of the block maxima."""
    m = np.sort(row.maxima if isinstance(row, BlockMaxRow) else np.asarray(row, dtype=float))
    if m.size == 0:
        raise DomainError("median of an empty row")
    return float(m[(m.size - 1) // 2])


@dataclass(frozen=True)
class FrechetFit:
    alpha_hat: Optional[float]
    beta_hat: Optional[np.ndarray]
    tau_hat: Optional[float]
    gamma_hat: Optional[float]
    scaling_used: float
    gamma_bounds: tuple
    fit: FitResult = field(repr=False, default=None)

    @property
    def status(self) -> str:
        return self.fit.status


def fit_frechet(
    row: BlockMaxRow,
    alpha_bounds: Sequence[float] = (0.3, 5.0),
    beta_bounds=((-3.0,), (3.0,)),
    gamma_bounds: Sequence[float] = (0.2, 5.0),
    scaling: Optional[float] = None,
    sigma_link: Callable = loglinear_scale,
    cfg: Optional[MaximizeConfig] = None,
    reference=None,
) -> FrechetFit:
    """Maximize the Frechet regression log-likelihood over ``A x B x [g-, g+]``.

    The overall scale is ``tau = gamma * scaling``; ``scaling`` defaults to
    the sample median of the maxima.  Coordinates whose bounds coincide are
    held fixed.  ``reference`` is ``(alpha, beta..., gamma)``.
    """
    g_lo, g_hi = float(gamma_bounds[0]), float(gamma_bounds[1])
    if not 0 < g_lo < g_hi:
        raise DomainError("gamma bounds must satisfy 0 < lower < upper")
    if scaling is None:
        scaling = median_scaling(row)
    if not scaling > 0:
        raise DomainError("scaling must be positive")
    b_lo = np.atleast_1d(np.asarray(beta_bounds[0], dtype=float))
    b_hi = np.atleast_1d(np.asarray(beta_bounds[1], dtype=float))
    dim = b_lo.size
    lower = np.concatenate([[alpha_bounds[0]], b_lo, [g_lo]])
    upper = np.concatenate([[alpha_bounds[1]], b_hi, [g_hi]])
    if lower[0] <= 0:
        raise DomainError("shape bounds must be positive")
    free = lower < upper
    if np.any(lower > upper):
        raise DomainError("search bounds must satisfy lower <= upper")

    link = frechet_scale_link(sigma_link, scaling=scaling, dim=dim)
    full_crit = log_score_criterion(link, row.as_design_row())

    def expand(z):
        eta = lower.copy()
        eta[free] = z
        return eta

    crit = Criterion(lambda z: full_crit.terms(expand(z)), row.n, name=full_crit.name)
    box = BoxDomain(lower[free], upper[free])
    ref = None if reference is None else np.asarray(reference, dtype=float)[free]
    names = tuple(n for n, f in zip(link.param_names, free) if f)
    res = maximize(crit, box, cfg, reference=ref, param_names=names)
    if not res.success:
        return FrechetFit(None, None, None, None, float(scaling), (g_lo, g_hi), res)
    eta = expand(res.eta_hat)
    return FrechetFit(
        alpha_hat=float(eta[0]),
        beta_hat=eta[1 : 1 + dim].copy(),
        tau_hat=float(eta[1 + dim] * scaling),
        gamma_hat=float(eta[1 + dim]),
        scaling_used=float(scaling),
        gamma_bounds=(g_lo, g_hi),
        fit=res,
    )


# --------------------------------------------------------------------------
# checks


@dataclass
class DoaReport:
    r_values: list
    y_grid: np.ndarray
    errors: np.ndarray  # (len(r_values), len(y_grid)) sup over x
    sup_errors: np.ndarray

    @property
    def strictly_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.sup_errors) < 0))

    @property
    def decreasing_per_y(self) -> bool:
        return bool(np.all(np.diff(self.errors, axis=0) <= 0))


def check_doa_uniform(model: TailModel, x_grid, y_grid, r_schedule) -> DoaReport:
    """Exact ``sup_x |F_x^r(a_r y) - Phi_alpha(y / sigma(x))|`` per ``(r, y)``."""
    x = _as_matrix(x_grid)
    y = np.asarray(y_grid, dtype=float)
    rs = [int(r) for r in r_schedule]
    errors = np.empty((len(rs), y.size))
    for k, r in enumerate(rs):
        a_r = float(model.baseline.norming(r))
        for j, yy in enumerate(y):
            exact = block_cdf(model, x, a_r * yy, r)
            limit = frechet_limit_cdf(model, x, yy)
            errors[k, j] = np.max(np.abs(exact - limit))
    return DoaReport(r_values=rs, y_grid=y, errors=errors, sup_errors=errors.max(axis=1))


@dataclass
class MinMaximaEntry:
    n: int
    r: int
    minima: np.ndarray
    frequency: float
    bound: float
    exact_probability: float
    se: float
    exceeds_bound: bool

    @property
    def median_min(self) -> float:
        return float(np.median(self.minima))


@dataclass
class MinMaximaReport:
    y: float
    entries: list

    @property
    def bound_respected(self) -> bool:
        return not any(e.exceeds_bound for e in self.entries)

    @property
    def diverging(self) -> bool:
        """Median block minimum strictly increasing along the schedule."""
        med = [e.median_min for e in self.entries]
        return bool(np.all(np.diff(med) > 0))


def check_min_maxima_divergence(
    model: TailModel,
    design: CovariateDesign,
    schedule,
    reps: int,
    y: float,
    seed: int,
    z: float = 3.0,
) -> MinMaximaReport:
    """Frequency of ``{min_i M_{n,i} <= y}`` against ``n * sup_i F_{x_i}(y) ** r``.

    Replication ``k`` of row ``n`` uses the stream ``(seed, n, k)`` whatever
    the block size, so schedule entries sharing ``n`` are coupled: their
    maxima are monotone in ``r`` draw by draw.
    """
    entries = []
    for n, r in schedule:
        n, r = int(n), int(r)
        x = design.points(n)
        c = np.asarray(model.c(x), dtype=float).reshape(n)
        fy = np.exp(c * _log_cdf(model.baseline, y))
        bound = float(n * np.max(fy) ** r)
        exact = float(-np.expm1(np.sum(np.log1p(-(fy**r)))))
        minima = np.empty(reps)
        for k in range(reps):
            u = open_uniform(make_stream(seed, n, k), n)
            minima[k] = block_maxima_from_uniforms(model, c, u, r).min()
        freq = float(np.mean(minima <= y))
        b = min(bound, 1.0)
        se = math.sqrt(b * (1.0 - b) / reps)
        entries.append(
            MinMaximaEntry(
                n=n,
                r=r,
                minima=minima,
                frequency=freq,
                bound=bound,
                exact_probability=exact,
                se=se,
                exceeds_bound=freq > b + z * se,
            )
        )
    return MinMaximaReport(y=float(y), entries=entries)


@dataclass
class FrechetIdentifiabilityReport:
    betas: np.ndarray
    ratio_spread: np.ndarray
    violations: list

    @property
    def identified(self) -> bool:
        return not self.violations


def check_frechet_identifiability(
    beta0,
    beta_grid,
    design: CovariateDesign,
    sigma_link: Callable = loglinear_scale,
    mc_size: int = 2000,
    seed: int = 0,
    tol: float = 1e-9,
) -> FrechetIdentifiabilityReport:
    """Look for ``beta != beta0`` with ``gamma sigma_beta = sigma_beta0`` P_X-a.s.

    Such a ``gamma`` exists exactly when the ratio ``sigma_beta0 / sigma_beta``
    is constant in ``x``; its relative spread over draws from ``P_X`` is
    reported and a spread below ``tol`` is a violation.
    """
    xs = design.sample_limit(make_stream(seed), mc_size)
    beta0 = np.atleast_1d(np.asarray(beta0, dtype=float))
    s0 = np.asarray(sigma_link(beta0, xs), dtype=float)
    betas = np.atleast_2d(np.asarray(beta_grid, dtype=float))
    if betas.shape[1] != beta0.size:
        betas = betas.T
    spread = np.empty(betas.shape[0])
    violations = []
    for k, b in enumerate(betas):
        ratio = s0 / np.asarray(sigma_link(b, xs), dtype=float)
        spread[k] = (ratio.max() - ratio.min()) / ratio.mean()
        if np.max(np.abs(b - beta0)) > tol and spread[k] <= tol:
            violations.append(b.copy())
    return FrechetIdentifiabilityReport(betas=betas, ratio_spread=spread, violations=violations)
