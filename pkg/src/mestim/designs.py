"""Fixed covariate designs, link functions and triangular-array rows.

A design produces the covariates ``x_{n,1..n}`` of row ``n`` deterministically.
Each built-in documents the limit ``P_X`` of its empirical design measure and
can draw from it, which is what identifiability checks and population
criteria integrate against.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy.stats import qmc

from .distributions import FRECHET, GEV, GP, NORMAL, POINT_MASS, DomainError, Family
from .streams import make_stream, open_uniform


class LinkError(DomainError):
    """A link produced parameters outside the family's parameter space."""

    def __init__(self, message: str, index: Optional[int] = None):
        super().__init__(message)
        self.index = index


# --------------------------------------------------------------------------
# designs


def uniform_design(n: int) -> np.ndarray:
    """The grid ``(1/n, 2/n, ..., 1)``."""
    if int(n) != n or n < 1:
        raise DomainError(f"design size must be a positive integer, got {n!r}")
    n = int(n)
    return np.arange(1, n + 1, dtype=float) / n


@dataclass(frozen=True)
class CovariateDesign:
    """Deterministic covariate rule with a documented limit law.

    ``points(n)`` returns an ``(n, dim)`` array; ``sample_limit(rng, m)``
    draws ``m`` covariates from ``P_X``.
    """

    name: str
    dim: int
    points_fn: Callable[[int], np.ndarray]
    limit_sampler: Callable[[np.random.Generator, int], np.ndarray]
    limit_law: str = ""

    def points(self, n: int) -> np.ndarray:
        if int(n) != n or n < 1:
            raise DomainError(f"design size must be a positive integer, got {n!r}")
        x = np.asarray(self.points_fn(int(n)), dtype=float)
        return x.reshape(int(n), self.dim)

    def sample_limit(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return np.asarray(self.limit_sampler(rng, size), dtype=float).reshape(size, self.dim)


def _uniform_limit(rng, size):
    # (0, 1] and (0, 1) differ by a null set
    return open_uniform(rng, size)


UNIFORM = CovariateDesign(
    name="uniform",
    dim=1,
    points_fn=uniform_design,
    limit_sampler=_uniform_limit,
    limit_law="Uniform(0, 1]",
)


def halton_design(lower, upper) -> CovariateDesign:
    """Low-discrepancy fill of a box; ``P_X`` is uniform on the box.

    Row ``n`` uses points 1..n of the unscrambled Halton sequence (the origin
    is skipped), so rows are nested and deterministic.
    """
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    if lower.shape != upper.shape or np.any(lower >= upper):
        raise DomainError("halton design needs lower < upper componentwise")
    d = lower.size

    def points(n):
        eng = qmc.Halton(d, scramble=False)
        eng.fast_forward(1)
        return lower + (upper - lower) * eng.random(n)

    def limit(rng, size):
        return lower + (upper - lower) * open_uniform(rng, (size, d))

    return CovariateDesign(
        name="halton",
        dim=d,
        points_fn=points,
        limit_sampler=limit,
        limit_law=f"Uniform on box {lower.tolist()} x {upper.tolist()}",
    )


def constant_design(x) -> CovariateDesign:
    """Every covariate equal to ``x``; reduces regression to an i.i.d. sample."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return CovariateDesign(
        name="constant",
        dim=x.size,
        points_fn=lambda n: np.tile(x, (n, 1)),
        limit_sampler=lambda rng, size: np.tile(x, (size, 1)),
        limit_law=f"point mass at {x.tolist()}",
    )


def read_covariates(path, delimiter: Optional[str] = None) -> np.ndarray:
    """Read one covariate vector per line from a delimited text file.

    A non-numeric first line is taken as a header.  Blank lines are skipped;
    NaN or infinite entries and ragged rows are rejected with the line number.
    ``delimiter=None`` accepts commas, tabs or whitespace.
    """
    rows = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            if delimiter is None:
                tokens = text.replace(",", " ").split()
            else:
                tokens = [t.strip() for t in text.split(delimiter)]
            try:
                values = [float(t) for t in tokens]
            except ValueError:
                if not rows and lineno == 1:
                    continue
                raise DomainError(f"{path}:{lineno}: non-numeric covariate entry") from None
            if not all(math.isfinite(v) for v in values):
                raise DomainError(f"{path}:{lineno}: NaN or infinite covariate entry")
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise DomainError(f"{path}:{lineno}: expected {width} columns, got {len(values)}")
            rows.append(values)
    if not rows:
        raise DomainError(f"{path}: no covariate rows")
    return np.asarray(rows, dtype=float)


def file_design(path, delimiter: Optional[str] = None) -> CovariateDesign:
    """Design backed by a fixed covariate file of ``N`` rows.

    Row ``n`` takes file rows ``ceil(i * N / n)`` for ``i = 1..n``, so its
    empirical measure converges to the file's empirical measure, which is the
    documented ``P_X``.
    """
    table = read_covariates(path, delimiter)
    big_n = table.shape[0]

    def points(n):
        idx = np.ceil(np.arange(1, n + 1) * big_n / n).astype(int) - 1
        return table[idx]

    def limit(rng, size):
        return table[rng.integers(0, big_n, size=size)]

    return CovariateDesign(
        name=f"file:{Path(path).name}",
        dim=table.shape[1],
        points_fn=points,
        limit_sampler=limit,
        limit_law=f"empirical measure of {big_n} rows in {Path(path).name}",
    )


# --------------------------------------------------------------------------
# links


def loglinear_scale(beta, x):
    """``exp(beta . x)``; ``x`` may be one vector or an ``(n, d)`` matrix."""
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    x = np.asarray(x, dtype=float)
    if x.ndim <= 1:
        x = np.atleast_1d(x)
        if x.shape != beta.shape:
            raise DomainError(f"dimension mismatch: beta has {beta.size}, x has {x.size}")
        return float(np.exp(beta @ x))
    if x.shape[1] != beta.size:
        raise DomainError(f"dimension mismatch: beta has {beta.size}, x has {x.shape[1]}")
    return np.exp(x @ beta)


@dataclass(frozen=True)
class LinkSpec:
    """Continuous map from (covariate, regression parameter) to family parameters.

    ``fn(x, eta)`` receives covariates of shape ``(n, d)`` and returns a tuple
    of length-``n`` arrays in the family's parameter order.
    """

    name: str
    family: Family
    n_params: int
    fn: Callable
    param_names: tuple = ()
    continuous: bool = True
    options: dict = field(default_factory=dict)

    def raw(self, x, eta) -> tuple:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        eta = np.atleast_1d(np.asarray(eta, dtype=float))
        if eta.size != self.n_params:
            raise DomainError(f"link {self.name!r} expects {self.n_params} parameters, got {eta.size}")
        out = self.fn(x, eta)
        return tuple(np.broadcast_to(np.asarray(v, dtype=float), (x.shape[0],)) for v in out)

    def theta(self, x, eta) -> tuple:
        """Family parameters at each covariate, validated for estimation."""
        theta = self.raw(x, eta)
        try:
            self.family.check_estimation(theta)
        except DomainError as exc:
            idx = _first_bad_index(self.family, theta)
            raise LinkError(
                f"link {self.name!r} left the parameter space at index {idx} "
                f"(eta={np.atleast_1d(eta).tolist()}): {exc}",
                index=idx,
            ) from None
        return theta


def _first_bad_index(family: Family, theta) -> Optional[int]:
    n = np.asarray(theta[0]).shape[0]
    for i in range(n):
        try:
            family.check_estimation(tuple(np.asarray(v)[i] for v in theta))
        except DomainError:
            return i
    return None


def identity_link(family: Family) -> LinkSpec:
    """``theta(x, eta) = eta`` for every covariate."""
    return LinkSpec(
        name=f"{family.name}-constant",
        family=family,
        n_params=family.n_params,
        fn=lambda x, eta: tuple(eta),
        param_names=family.param_names,
    )


def normal_linear_mean(sd: float = 1.0) -> LinkSpec:
    """Normal responses with mean ``eta * x`` and known sd."""
    return LinkSpec(
        name="normal-linear-mean",
        family=NORMAL,
        n_params=1,
        fn=lambda x, eta: (eta[0] * x[:, 0], sd),
        param_names=("slope",),
        options={"sd": sd},
    )


def normal_constant_mean(sd: float = 1.0) -> LinkSpec:
    return LinkSpec(
        name="normal-constant-mean",
        family=NORMAL,
        n_params=1,
        fn=lambda x, eta: (np.full(x.shape[0], eta[0]), sd),
        param_names=("mean",),
        options={"sd": sd},
    )


def normal_location_scale() -> LinkSpec:
    """Mean ``a + b x`` and sd ``exp(s)`` with ``eta = (a, b, s)``."""
    return LinkSpec(
        name="normal-location-scale",
        family=NORMAL,
        n_params=3,
        fn=lambda x, eta: (eta[0] + eta[1] * x[:, 0], np.exp(eta[2])),
        param_names=("a", "b", "log_sd"),
    )


def normal_redundant_mean(sd: float = 1.0) -> LinkSpec:
    """Mean ``eta_1 + eta_2``: not identifiable, a negative control."""
    return LinkSpec(
        name="normal-redundant-mean",
        family=NORMAL,
        n_params=2,
        fn=lambda x, eta: (np.full(x.shape[0], eta[0] + eta[1]), sd),
        param_names=("m1", "m2"),
        options={"sd": sd},
    )


def gev_loglinear() -> LinkSpec:
    """GEV with ``mu = m0 + m1 x``, ``sigma = exp(s0 + s1 x)``, constant ``xi``."""
    return LinkSpec(
        name="gev-loglinear",
        family=GEV,
        n_params=5,
        fn=lambda x, eta: (
            eta[0] + eta[1] * x[:, 0],
            np.exp(eta[2] + eta[3] * x[:, 0]),
            eta[4],
        ),
        param_names=("mu0", "mu1", "log_sigma0", "log_sigma1", "xi"),
    )


def gev_constant() -> LinkSpec:
    return identity_link(GEV)


def gp_loglinear() -> LinkSpec:
    """GP with ``a = exp(s0 + s1 x)`` and constant ``xi``."""
    return LinkSpec(
        name="gp-loglinear",
        family=GP,
        n_params=3,
        fn=lambda x, eta: (np.exp(eta[0] + eta[1] * x[:, 0]), eta[2]),
        param_names=("log_a0", "log_a1", "xi"),
    )


def point_mass_link() -> LinkSpec:
    return LinkSpec(
        name="point-mass",
        family=POINT_MASS,
        n_params=1,
        fn=lambda x, eta: (np.full(x.shape[0], eta[0]),),
        param_names=("loc",),
    )


def frechet_scale_link(sigma_link: Callable = loglinear_scale, scaling: float = 1.0, dim: int = 1) -> LinkSpec:
    """Frechet with ``eta = (alpha, beta_1..beta_d, gamma)``.

    The scale is ``gamma * scaling * sigma_link(beta, x)`` and the shape is
    ``alpha``; ``scaling`` plays the role of the block-maxima norming constant.
    """

    def fn(x, eta):
        alpha, beta, gamma = eta[0], eta[1 : 1 + dim], eta[1 + dim]
        return (gamma * scaling * np.asarray(sigma_link(beta, x), dtype=float), alpha)

    return LinkSpec(
        name="frechet-scale",
        family=FRECHET,
        n_params=dim + 2,
        fn=fn,
        param_names=("alpha", *[f"beta{j}" for j in range(dim)], "gamma"),
        options={"scaling": scaling},
    )


LINKS = {
    "normal-linear-mean": normal_linear_mean,
    "normal-constant-mean": normal_constant_mean,
    "normal-location-scale": normal_location_scale,
    "normal-redundant-mean": normal_redundant_mean,
    "gev-loglinear": gev_loglinear,
    "gev-constant": gev_constant,
    "gp-loglinear": gp_loglinear,
    "point-mass": point_mass_link,
}


# --------------------------------------------------------------------------
# rows


@dataclass(frozen=True)
class DesignRow:
    """Row ``n`` of a triangular array: covariates and independent responses."""

    n: int
    covariates: np.ndarray
    responses: np.ndarray
    seed: Optional[int] = None
    kernel: str = ""

    def __post_init__(self):
        if self.covariates.shape[0] != self.n or self.responses.shape[0] != self.n:
            raise DomainError("row lengths must equal n")


def generate_row(design: CovariateDesign, link: LinkSpec, eta0, n: int, seed: int) -> DesignRow:
    """Draw ``Y_{n,i} ~ P_{theta(x_{n,i}, eta0)}`` independently for ``i = 1..n``."""
    x = design.points(n)
    theta = link.theta(x, eta0)
    y = link.family.sample(theta, make_stream(seed), n)
    return DesignRow(
        n=int(n),
        covariates=x,
        responses=np.asarray(y, dtype=float).reshape(int(n)),
        seed=seed,
        kernel=f"{link.name}@{np.atleast_1d(eta0).tolist()}",
    )


# --------------------------------------------------------------------------
# identifiability


@dataclass
class IdentifiabilityReport:
    """Estimated ``P_X(theta(x, eta) != theta(x, eta0))`` per grid point."""

    etas: np.ndarray
    masses: np.ndarray
    is_reference: np.ndarray
    violations: list

    @property
    def identified(self) -> bool:
        return not self.violations


def check_identifiability(
    link: LinkSpec,
    design: CovariateDesign,
    eta0,
    grid,
    mc_size: int = 2000,
    seed: int = 0,
    tol: float = 1e-12,
) -> IdentifiabilityReport:
    """Flag grid points whose induced parameters agree with ``eta0`` P_X-a.s.

    Grid points within ``tol`` of ``eta0`` are marked as the reference and
    excluded from the verdict.
    """
    xs = design.sample_limit(make_stream(seed), mc_size)
    eta0 = np.atleast_1d(np.asarray(eta0, dtype=float))
    th0 = np.stack(link.raw(xs, eta0))
    etas = np.atleast_2d(np.asarray(grid, dtype=float))
    masses = np.empty(etas.shape[0])
    is_ref = np.zeros(etas.shape[0], dtype=bool)
    violations = []
    for k, eta in enumerate(etas):
        th = np.stack(link.raw(xs, eta))
        differs = np.any(np.abs(th - th0) > tol, axis=0)
        masses[k] = differs.mean()
        if np.max(np.abs(eta - eta0)) <= tol:
            is_ref[k] = True
        elif masses[k] == 0.0:
            violations.append(eta.copy())
    return IdentifiabilityReport(etas=etas, masses=masses, is_reference=is_ref, violations=violations)
