"""Strictly proper scoring rules, oriented so that higher is better.

Two rules are provided: the logarithmic score and the energy score
``ES_beta(P, y) = 0.5 E|Y - Y'|^beta - E|Y - y|^beta`` for ``0 < beta < 2``
(CRPS up to sign when ``d = 1`` and ``beta = 1``).  Expectations under ``P``
are estimated by Monte Carlo from explicit streams.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .distributions import DomainError, Discrete, Family, Frozen
from .streams import as_stream, make_stream, open_uniform


@dataclass(frozen=True)
class EnergyConfig:
    beta: float = 1.0
    mc_pairs: int = 100_000
    antithetic: bool = True

    def __post_init__(self):
        if not 0.0 < self.beta < 2.0:
            raise DomainError(f"energy score needs 0 < beta < 2, got {self.beta}")
        if int(self.mc_pairs) != self.mc_pairs or self.mc_pairs < 1:
            raise DomainError("mc_pairs must be a positive integer")


def _abs_pow(d: np.ndarray, beta: float) -> np.ndarray:
    # last axis holds vector components
    r = np.abs(d[..., 0]) if d.shape[-1] == 1 else np.sqrt(np.sum(d * d, axis=-1))
    return r if beta == 1.0 else r**beta


def log_score(family: Family, theta, y):
    """``log p_theta(y)``; ``-inf`` off the support."""
    return family.logpdf(theta, y)


# --------------------------------------------------------------------------
# energy score


def _pairwise_mean_1d_beta1(s: np.ndarray) -> float:
    """``mean_{j,k} |s_j - s_k|`` via the sorted-sample identity."""
    s = np.sort(s)
    m = s.size
    k = np.arange(1, m + 1)
    return float(2.0 * np.sum((2 * k - m - 1) * s) / (m * m))


def _pairwise_mean(samples: np.ndarray, beta: float, weights=None, chunk: int = 2048) -> float:
    """V-statistic ``sum_{j,k} w_j w_k |s_j - s_k|^beta`` (uniform weights by default)."""
    m = samples.shape[0]
    if weights is None and beta == 1.0 and (samples.ndim == 1 or samples.shape[1] == 1):
        return _pairwise_mean_1d_beta1(samples.reshape(m))
    w = np.full(m, 1.0 / m) if weights is None else np.asarray(weights, dtype=float)
    x = samples.reshape(m, -1)
    total = 0.0
    for start in range(0, m, chunk):
        blk = x[start : start + chunk]
        d = _abs_pow(blk[:, None, :] - x[None, :, :], beta)
        total += float(w[start : start + chunk] @ d @ w)
    return total


def energy_score_empirical(samples, y, beta: float = 1.0) -> float:
    """Energy score of the empirical distribution of ``samples`` at ``y``.

    ``samples`` has shape ``(m,)`` or ``(m, d)``; the result is
    ``(1/(2 m^2)) sum_{j,k} |s_j - s_k|^beta - (1/m) sum_j |s_j - y|^beta``.
    """
    if not 0.0 < beta < 2.0:
        raise DomainError(f"energy score needs 0 < beta < 2, got {beta}")
    s = np.asarray(samples, dtype=float)
    if s.ndim == 0 or s.shape[0] == 0:
        raise DomainError("energy score needs a nonempty sample")
    y = np.asarray(y, dtype=float)
    if s.ndim == 1:
        s = s[:, None]
    y = y.reshape(1, -1)
    if y.shape[1] != s.shape[1]:
        raise DomainError("observation and sample dimensions differ")
    pair = _pairwise_mean(s, beta)
    obs = float(np.mean(_abs_pow(s - y, beta)))
    return 0.5 * pair - obs


def _energy_discrete(dist: Discrete, y, beta: float) -> float:
    a = dist.atoms
    if a.ndim == 1:
        a = a[:, None]
    y = np.asarray(y, dtype=float).reshape(1, -1)
    pair = _pairwise_mean(a, beta, weights=dist.weights)
    obs = float(dist.weights @ _abs_pow(a - y, beta))
    return 0.5 * pair - obs


def energy_score(dist, y, cfg: EnergyConfig, rng) -> float:
    """Energy score of ``dist`` at ``y``.

    Finitely supported distributions are scored in closed form.  Otherwise
    ``cfg.mc_pairs`` independent pairs ``(Y_j, Y'_j)`` are drawn; objects with
    a ``quantile`` method are sampled by inverse cdf, with antithetic
    complements when ``cfg.antithetic`` is set.
    """
    if isinstance(dist, Discrete):
        return _energy_discrete(dist, y, cfg.beta)
    rng = as_stream(rng)
    m = cfg.mc_pairs
    if hasattr(dist, "quantile"):
        u = open_uniform(rng, m)
        v = open_uniform(rng, m)
        if cfg.antithetic:
            u = np.concatenate([u, 1.0 - u])
            v = np.concatenate([v, 1.0 - v])
        first = np.asarray(dist.quantile(u), dtype=float)
        second = np.asarray(dist.quantile(v), dtype=float)
    else:
        first = np.asarray(dist.sample(rng, m), dtype=float)
        second = np.asarray(dist.sample(rng, m), dtype=float)
    if first.ndim == 1:
        first, second = first[:, None], second[:, None]
    y = np.asarray(y, dtype=float).reshape(1, -1)
    pair = np.mean(_abs_pow(first - second, cfg.beta))
    obs = 0.5 * (np.mean(_abs_pow(first - y, cfg.beta)) + np.mean(_abs_pow(second - y, cfg.beta)))
    return float(0.5 * pair - obs)


# --------------------------------------------------------------------------
# rules as criterion builders


class LogScore:
    """Logarithmic score rule; its criterion is the conditional log-likelihood."""

    name = "log"

    def evaluator(self, family: Family, y):
        y = np.asarray(y, dtype=float)
        return lambda theta: np.asarray(family.logpdf(theta, y), dtype=float)

    def describe(self) -> dict:
        return {"name": "log"}


@dataclass(frozen=True)
class EnergyScore:
    """Energy-score rule with common random numbers across parameters.

    The uniforms behind the Monte Carlo expectations are drawn once from
    ``seed``, so the per-observation scores are a deterministic, continuous
    function of the family parameters.
    """

    beta: float = 1.0
    mc_size: int = 1024
    seed: int = 0
    antithetic: bool = True
    name: str = "energy"

    def __post_init__(self):
        EnergyConfig(self.beta, self.mc_size, self.antithetic)

    def evaluator(self, family: Family, y):
        return EnergyEvaluator(family, np.asarray(y, dtype=float), self)

    def describe(self) -> dict:
        return {
            "name": "energy",
            "beta": self.beta,
            "mc_size": self.mc_size,
            "seed": self.seed,
            "antithetic": self.antithetic,
        }


class EnergyEvaluator:
    """Per-observation energy scores ``ES_beta(P_{theta_i}, y_i)``.

    Location-scale families reuse one sorted standardized sample: the pair
    term is computed once and only ``E|Y - y_i|^beta`` depends on ``theta``.
    Other families evaluate both terms from inverse-cdf draws of shape
    ``(n, m)``.
    """

    def __init__(self, family: Family, y: np.ndarray, rule: EnergyScore):
        self.family = family
        self.y = y
        self.beta = float(rule.beta)
        u = open_uniform(make_stream(rule.seed, 0), rule.mc_size)
        v = open_uniform(make_stream(rule.seed, 1), rule.mc_size)
        if rule.antithetic:
            u = np.concatenate([u, 1.0 - u])
            v = np.concatenate([v, 1.0 - v])
        self.u, self.v = u, v
        if family.location_scale is not None:
            z = np.sort(np.asarray(family.std_quantile(u), dtype=float))
            self.z = z
            self.z_cum = np.concatenate([[0.0], np.cumsum(z)])
            self.half_pair = 0.5 * _pairwise_mean(z, self.beta)

    def _mean_abs_dev(self, w: np.ndarray) -> np.ndarray:
        z = self.z
        m = z.size
        if self.beta == 1.0:
            k = np.searchsorted(z, w, side="right")
            below = k * w - self.z_cum[k]
            above = (self.z_cum[m] - self.z_cum[k]) - (m - k) * w
            return (below + above) / m
        return np.mean(np.abs(z[None, :] - w[:, None]) ** self.beta, axis=1)

    def __call__(self, theta) -> np.ndarray:
        fam = self.family
        if fam.location_scale is not None:
            loc, scale = fam.location_scale(theta)
            loc = np.broadcast_to(np.asarray(loc, dtype=float), self.y.shape)
            scale = np.broadcast_to(np.asarray(scale, dtype=float), self.y.shape)
            w = (self.y - loc) / scale
            return scale**self.beta * (self.half_pair - self._mean_abs_dev(w))
        cols = [np.asarray(t, dtype=float).reshape(-1, 1) for t in theta]
        q1 = np.asarray(fam.quantile(tuple(cols), self.u[None, :]), dtype=float)
        q2 = np.asarray(fam.quantile(tuple(cols), self.v[None, :]), dtype=float)
        yy = self.y[:, None]
        b = self.beta
        pair = np.mean(np.abs(q1 - q2) ** b, axis=1)
        obs = 0.5 * (np.mean(np.abs(q1 - yy) ** b, axis=1) + np.mean(np.abs(q2 - yy) ** b, axis=1))
        return 0.5 * pair - obs


def make_rule(name: str, **options):
    """Build a rule from its name; ``"mle"`` is an alias of ``"log"``."""
    if name in ("log", "mle", "logarithmic"):
        if options:
            raise DomainError(f"log score takes no options, got {sorted(options)}")
        return LogScore()
    if name in ("energy", "crps"):
        if name == "crps":
            options.setdefault("beta", 1.0)
        return EnergyScore(**options)
    raise DomainError(f"unknown scoring rule {name!r}")


# --------------------------------------------------------------------------
# propriety


class GapEstimate(NamedTuple):
    value: float
    se: float


def _escapes_support(p, p_prime) -> bool:
    """True when ``p`` charges an interval outside the support of ``p_prime``."""
    try:
        lo, hi = p.support()
        lo2, hi2 = p_prime.support()
    except AttributeError:
        return False
    return lo < lo2 or hi > hi2


def propriety_gap(rule, p: Frozen, p_prime: Frozen, mc_size: int, rng, antithetic: bool = True) -> GapEstimate:
    """Monte Carlo estimate of ``E_P[S(P, Y) - S(P', Y)]`` with its standard error.

    Both scores are evaluated on the same uniforms, so the integrand is
    identically zero when ``P == P'``.  For the energy score each outer draw
    uses one inner pair per distribution, which keeps the integrand unbiased.
    """
    if mc_size < 2:
        raise DomainError("mc_size must be at least 2")
    rng = as_stream(rng)
    a = open_uniform(rng, mc_size)
    if isinstance(rule, LogScore) or rule == "log":
        if _escapes_support(p, p_prime):
            return GapEstimate(float("inf"), float("nan"))
        us = [a, 1.0 - a] if antithetic else [a]
        parts = []
        for uu in us:
            y = np.asarray(p.quantile(uu), dtype=float)
            with np.errstate(invalid="ignore"):
                parts.append(np.asarray(p.logpdf(y)) - np.asarray(p_prime.logpdf(y)))
        g = np.mean(parts, axis=0)
    else:
        beta = rule.beta if hasattr(rule, "beta") else float(rule)
        u = open_uniform(rng, mc_size)
        v = open_uniform(rng, mc_size)
        triples = [(a, u, v), (1.0 - a, 1.0 - u, 1.0 - v)] if antithetic else [(a, u, v)]
        parts = []
        for aa, uu, vv in triples:
            y = np.asarray(p.quantile(aa), dtype=float)
            s = []
            for dist in (p, p_prime):
                q1 = np.asarray(dist.quantile(uu), dtype=float)
                q2 = np.asarray(dist.quantile(vv), dtype=float)
                s.append(
                    0.5 * np.abs(q1 - q2) ** beta
                    - 0.5 * (np.abs(q1 - y) ** beta + np.abs(q2 - y) ** beta)
                )
            parts.append(s[0] - s[1])
        g = np.mean(parts, axis=0)
    if np.any(np.isposinf(g)):
        return GapEstimate(float("inf"), float("nan"))
    return GapEstimate(float(np.mean(g)), float(np.std(g, ddof=1) / np.sqrt(mc_size)))


@dataclass
class SweepRow:
    theta: tuple
    theta_prime: tuple
    distance: float
    gap: float
    se: float
    ok: bool


@dataclass
class SweepReport:
    rule: str
    rows: list

    @property
    def passed(self) -> bool:
        return all(r.ok for r in self.rows)

    @property
    def failures(self) -> list:
        return [r for r in self.rows if not r.ok]


def propriety_sweep(
    rule,
    family: Family,
    lower,
    upper,
    n_pairs: int = 50,
    mc_size: int = 100_000,
    seed: int = 0,
    separation: float = 0.1,
    z: float = 3.0,
) -> SweepReport:
    """Check ``gap >= -z se`` for random pairs in a box, and ``gap > z se`` when
    the two parameter vectors are more than ``separation`` apart."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    rng = make_stream(seed, 0)
    rows = []
    for k in range(n_pairs):
        th = lower + (upper - lower) * open_uniform(rng, lower.size)
        thp = lower + (upper - lower) * open_uniform(rng, lower.size)
        est = propriety_gap(rule, family(*th), family(*thp), mc_size, make_stream(seed, 1, k))
        dist = float(np.linalg.norm(th - thp))
        if est.value == math.inf:
            # P charges a set where S(P', .) = -inf: strictly positive gap
            ok = True
        else:
            ok = est.value >= -z * est.se
            if dist > separation:
                ok = ok and est.value > z * est.se
        rows.append(SweepRow(tuple(th), tuple(thp), dist, est.value, est.se, bool(ok)))
    name = getattr(rule, "name", str(rule))
    if name == "energy":
        name = f"energy(beta={rule.beta})"
    return SweepReport(rule=name, rows=rows)
