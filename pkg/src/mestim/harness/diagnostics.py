"""Population-level criterion estimates and tail-envelope diagnostics."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from ..scoring import GapEstimate
from ..streams import make_stream


def _terms(rule, link, x, y, eta) -> np.ndarray:
    return np.asarray(rule.evaluator(link.family, y)(link.theta(x, eta)), dtype=float)


def _limit_sample(model, mc_size: int, seed: int):
    link = model.limit_link()
    x = model.design.sample_limit(make_stream(seed, 0), mc_size)
    theta0 = link.theta(x, model.limit_eta0())
    y = np.asarray(link.family.sample(theta0, make_stream(seed, 1), mc_size), dtype=float).reshape(-1)
    return link, x, y


def _mean_se(t: np.ndarray) -> GapEstimate:
    if np.isneginf(t).any():
        return GapEstimate(-math.inf, math.nan)
    return GapEstimate(float(np.mean(t)), float(np.std(t, ddof=1) / math.sqrt(t.size)))


def population_criterion(model, rule, eta, mc_size: int, seed: int) -> GapEstimate:
    """Monte Carlo estimate of ``M(eta) = E m_eta(X, Y)`` under the limit law.

    ``X`` is drawn from the design's limit law and ``Y`` from the kernel at
    ``eta0``.  Returns the mean and its standard error; the value is
    ``-inf`` (se ``nan``) if any sampled term is ``-inf``.
    """
    link, x, y = _limit_sample(model, mc_size, seed)
    return _mean_se(_terms(rule, link, x, y, eta))


def population_criterion_drop(model, rule, eta, mc_size: int, seed: int) -> GapEstimate:
    """``M(eta0) - M(eta)`` estimated on one shared sample, with its paired se."""
    link, x, y = _limit_sample(model, mc_size, seed)
    t0 = _terms(rule, link, x, y, model.limit_eta0())
    t = _terms(rule, link, x, y, eta)
    if np.isneginf(t).any():
        return GapEstimate(math.inf, math.nan)
    return _mean_se(t0 - t)


@dataclass
class TailEnvelopeReport:
    t: np.ndarray
    survival: np.ndarray  # one row per sampled (n, i)
    envelope: np.ndarray
    second_moment: float
    slope: float
    heavy_tail: bool

    @property
    def verdict(self) -> str:
        return "advisory" if self.heavy_tail else "pass"


def envelope_from_samples(samples, t_grid, slope_limit: float = -2.0) -> TailEnvelopeReport:
    """Pointwise-sup survival envelope of several samples of ``|m|``.

    The second moment ``2 * int t S(t) dt`` is integrated by the trapezoid
    rule over the grid.  The log-survival slope is fitted over the upper
    half of the grid points where the envelope is positive; a slope above
    ``slope_limit`` flags an apparently heavy tail.
    """
    t = np.asarray(t_grid, dtype=float)
    if np.any(t <= 0) or np.any(np.diff(t) <= 0):
        raise ValueError("t grid must be positive and increasing")
    surv = np.array([[np.mean(np.abs(s) > tt) for tt in t] for s in samples])
    env = surv.max(axis=0)
    second = float(2.0 * trapezoid(t * env, t))
    pos = np.nonzero(env > 0)[0]
    tail = pos[pos >= t.size // 2]
    if tail.size >= 2:
        slope = float(np.polyfit(np.log(t[tail]), np.log(env[tail]), 1)[0])
    else:
        slope = -math.inf  # envelope vanishes on the upper grid
    return TailEnvelopeReport(t=t, survival=surv, envelope=env, second_moment=second, slope=slope, heavy_tail=slope > slope_limit)


def tail_envelope_diagnostic(model, rule, eta, cells, t_grid, mc_size: int, seed: int) -> TailEnvelopeReport:
    """Survival envelope of ``|m_eta(Z_{n,i})|`` over sampled cells ``(n, i)``.

    Advisory only: a finite sample cannot certify a dominating envelope.
    """
    link = model.limit_link()
    samples = []
    for k, (n, i) in enumerate(cells):
        x_row = model.design.points(n)
        if not 1 <= i <= n:
            raise ValueError(f"cell index {i} outside row {n}")
        x = np.repeat(x_row[i - 1 : i], mc_size, axis=0)
        y = model.sample_responses(n, x, make_stream(seed, k))
        samples.append(_terms(rule, link, x, y, eta))
    return envelope_from_samples(samples, t_grid)
