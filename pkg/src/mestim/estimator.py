"""M-estimation over a compact box.

The criterion is the sample average ``M_n(eta) = (1/n) sum_i m_eta(z_i)`` with
values in ``[-inf, inf)``.  ``maximize`` scans a coarse lattice, then refines
the most promising lattice points with a Nelder-Mead simplex projected onto
the box.  Points where the criterion is ``-inf`` are infeasible: they lose
every comparison but are never replaced by a finite surrogate, so the search
cannot be pulled across a support boundary.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .designs import DesignRow, LinkSpec
from .distributions import DomainError
from .scoring import LogScore, make_rule


class CriterionError(RuntimeError):
    """The criterion returned NaN or +inf, which signals a bug, not a support violation."""


class BoxDomain:
    """Product of closed intervals ``[lower_j, upper_j]`` with the Euclidean metric."""

    def __init__(self, lower, upper):
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        if lower.shape != upper.shape or lower.ndim != 1 or lower.size == 0:
            raise DomainError("box bounds must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise DomainError("box bounds must be finite")
        if np.any(lower >= upper):
            raise DomainError(f"empty box: need lower < upper, got {lower.tolist()} / {upper.tolist()}")
        self.lower = lower
        self.upper = upper

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, eta, tol: float = 0.0) -> bool:
        eta = np.asarray(eta, dtype=float)
        return bool(eta.shape == self.lower.shape and np.all(eta >= self.lower - tol) and np.all(eta <= self.upper + tol))

    def clip(self, eta) -> np.ndarray:
        return np.clip(np.asarray(eta, dtype=float), self.lower, self.upper)

    @staticmethod
    def distance(a, b) -> float:
        return float(np.linalg.norm(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))

    def lattice(self, points_per_dim: int) -> np.ndarray:
        """Lattice points in lexicographic order, endpoints included."""
        if points_per_dim < 2:
            raise DomainError("lattice needs at least 2 points per dimension")
        axes = [np.linspace(lo, hi, points_per_dim) for lo, hi in zip(self.lower, self.upper)]
        return np.array(list(itertools.product(*axes)))

    def on_boundary(self, eta, rtol: float = 1e-9) -> np.ndarray:
        eta = np.asarray(eta, dtype=float)
        tol = rtol * self.width
        return (eta <= self.lower + tol) | (eta >= self.upper - tol)

    def __repr__(self) -> str:
        return f"BoxDomain(lower={self.lower.tolist()}, upper={self.upper.tolist()})"


class Criterion:
    """Sample-average criterion built from per-observation terms.

    ``terms(eta)`` returns the ``n`` values ``m_eta(z_i)``.  The average uses
    ``math.fsum``, so it is correctly rounded and independent of the order of
    the observations.
    """

    def __init__(self, terms: Callable, n: int, name: str = "", box: Optional[BoxDomain] = None):
        if n < 1:
            raise DomainError("criterion needs at least one observation")
        self.terms = terms
        self.n = int(n)
        self.name = name
        self.box = box
        self.evaluations = 0

    @classmethod
    def from_function(cls, f: Callable, name: str = "") -> "Criterion":
        """Wrap a scalar function of ``eta`` as a one-term criterion."""
        return cls(lambda eta: np.array([f(eta)], dtype=float), 1, name=name)

    def __call__(self, eta) -> float:
        eta = np.asarray(eta, dtype=float)
        self.evaluations += 1
        t = np.asarray(self.terms(eta), dtype=float).reshape(-1)
        if t.size != self.n:
            raise CriterionError(f"criterion {self.name!r} returned {t.size} terms, expected {self.n}")
        if np.isnan(t).any():
            raise CriterionError(f"criterion {self.name!r} is NaN at eta={eta.tolist()}")
        if np.isposinf(t).any():
            raise CriterionError(f"criterion {self.name!r} is +inf at eta={eta.tolist()}")
        if np.isneginf(t).any():
            return -math.inf
        return math.fsum(t.tolist()) / self.n


def criterion_value(crit: Criterion, eta, box: Optional[BoxDomain] = None) -> float:
    """``M_n(eta)``; raises ``DomainError`` when ``eta`` lies outside the box."""
    box = box if box is not None else crit.box
    if box is not None and not box.contains(eta):
        raise DomainError(f"eta={np.asarray(eta).tolist()} lies outside {box!r}")
    return crit(eta)


def score_criterion(rule, link: LinkSpec, row: DesignRow) -> Criterion:
    """Criterion ``m_eta(x, y) = S(P_{theta(x, eta)}, y)`` for a scoring rule."""
    ev = rule.evaluator(link.family, row.responses)
    x = row.covariates

    def terms(eta):
        return ev(link.theta(x, eta))

    return Criterion(terms, row.n, name=f"{rule.name}:{link.name}")


def log_score_criterion(link: LinkSpec, row: DesignRow) -> Criterion:
    """Conditional log-likelihood ``(1/n) sum_i log p_{theta(x_i, eta)}(y_i)``."""
    return score_criterion(LogScore(), link, row)


# --------------------------------------------------------------------------
# maximization


@dataclass(frozen=True)
class MaximizeConfig:
    grid_points: int = 9
    n_starts: int = 3
    max_iter: int = 200
    xtol: float = 1e-6
    tie_tol: float = 1e-12
    max_restarts: int = 3
    step_fraction: float = 0.5

    def __post_init__(self):
        if self.grid_points < 2 or self.n_starts < 1 or self.max_iter < 1:
            raise DomainError("invalid optimizer configuration")


@dataclass(frozen=True)
class FitResult:
    """Outcome of a maximization.

    ``eta_hat`` is ``None`` when the status is ``"degenerate"`` (every
    evaluated point was ``-inf``).  ``trace`` lists the successive best points
    in evaluation order, so its values are strictly increasing.
    """

    eta_hat: Optional[np.ndarray]
    criterion_value: float
    evaluations: int
    trace: list
    feasible_start_found: bool
    status: str
    reference: Optional[np.ndarray] = None
    reference_value: Optional[float] = None
    on_boundary: Optional[np.ndarray] = None
    param_names: tuple = ()
    extra: dict = field(default_factory=dict)

    @property
    def success(self) -> bool:
        return self.status == "success"

    @property
    def gap(self) -> Optional[float]:
        """``M_n(eta_hat) - M_n(eta_ref)``, or None without a finite reference."""
        if self.reference_value is None or not math.isfinite(self.reference_value):
            return None
        return self.criterion_value - self.reference_value

    def to_dict(self) -> dict:
        def _list(a):
            return None if a is None else [float(v) for v in np.asarray(a)]

        return {
            "status": self.status,
            "eta_hat": _list(self.eta_hat),
            "param_names": list(self.param_names),
            "criterion_value": _json_float(self.criterion_value),
            "evaluations": self.evaluations,
            "feasible_start_found": self.feasible_start_found,
            "on_boundary": None if self.on_boundary is None else [bool(b) for b in self.on_boundary],
            "any_on_boundary": bool(self.on_boundary is not None and np.any(self.on_boundary)),
            "reference": _list(self.reference),
            "reference_value": None if self.reference_value is None else _json_float(self.reference_value),
            "trace_length": len(self.trace),
            "trace_first": _json_float(self.trace[0][1]) if self.trace else None,
            "trace_last": _json_float(self.trace[-1][1]) if self.trace else None,
            **self.extra,
        }


def _json_float(v: float):
    if math.isfinite(v):
        return float(v)
    return "-inf" if v < 0 else ("inf" if v > 0 else "nan")


class _Tracker:
    """Evaluates the criterion and records strict improvements."""

    def __init__(self, crit: Criterion, box: BoxDomain):
        self.crit = crit
        self.box = box
        self.best_x: Optional[np.ndarray] = None
        self.best_f = -math.inf
        self.trace: list = []

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        f = self.crit(x)
        if f > self.best_f:
            self.best_f = f
            self.best_x = x.copy()
            self.trace.append((tuple(float(v) for v in x), f))
        return f


def _lattice_starts(points: np.ndarray, values: np.ndarray, k: int, n_starts: int, tie_tol: float) -> list:
    """Pick refinement starts: the tie-broken grid optimum, then other lattice
    local maxima by decreasing value, then the remaining best points."""
    finite = np.isfinite(values)
    if not finite.any():
        return []
    vmax = values[finite].max()
    # lattice order is lexicographic, so the first index within tie_tol is the
    # lexicographically smallest optimum
    first = int(np.flatnonzero(values >= vmax - tie_tol)[0])
    d = points.shape[1]
    grid = values.reshape((k,) * d)
    is_local = np.ones(grid.shape, dtype=bool)
    for axis in range(d):
        pad = [(0, 0)] * d
        pad[axis] = (1, 1)
        padded = np.pad(grid, pad, constant_values=-np.inf)
        lo = np.take(padded, range(0, k), axis=axis)
        hi = np.take(padded, range(2, k + 2), axis=axis)
        is_local &= (grid >= lo) & (grid >= hi)
    is_local = is_local.reshape(-1) & finite
    order = sorted(np.flatnonzero(is_local), key=lambda i: (-values[i], i))
    rest = sorted(np.flatnonzero(finite & ~is_local), key=lambda i: (-values[i], i))
    starts = [first]
    for i in itertools.chain(order, rest):
        if len(starts) >= n_starts:
            break
        if i != first:
            starts.append(int(i))
    return [(points[i], float(values[i])) for i in starts]


def _nelder_mead(fun, box: BoxDomain, x0, f0, step, max_iter: int, xtol: float):
    """Nelder-Mead maximization with every trial point projected onto the box."""
    d = x0.size
    xs = [x0.copy()]
    fs = [f0]
    for j in range(d):
        x = x0.copy()
        s = step[j]
        if x[j] + s > box.upper[j]:
            s = -s
        x[j] = x[j] + s
        x = box.clip(x)
        xs.append(x)
        fs.append(fun(x))
    xs = np.array(xs)
    fs = np.array(fs, dtype=float)
    for _ in range(max_iter):
        order = np.argsort(-fs, kind="stable")
        xs, fs = xs[order], fs[order]
        if np.max(np.abs(xs[1:] - xs[0])) < xtol:
            break
        centroid = xs[:-1].mean(axis=0)
        worst = xs[-1]
        xr = box.clip(centroid + (centroid - worst))
        fr = fun(xr)
        if fr > fs[0]:
            xe = box.clip(centroid + 2.0 * (xr - centroid))
            fe = fun(xe)
            if fe > fr:
                xs[-1], fs[-1] = xe, fe
            else:
                xs[-1], fs[-1] = xr, fr
            continue
        if fr > fs[-2]:
            xs[-1], fs[-1] = xr, fr
            continue
        if fr > fs[-1]:
            xc = box.clip(centroid + 0.5 * (xr - centroid))
            fc = fun(xc)
            if fc >= fr:
                xs[-1], fs[-1] = xc, fc
                continue
        else:
            xc = box.clip(centroid + 0.5 * (worst - centroid))
            fc = fun(xc)
            if fc > fs[-1]:
                xs[-1], fs[-1] = xc, fc
                continue
        for i in range(1, d + 1):
            xs[i] = xs[0] + 0.5 * (xs[i] - xs[0])
            fs[i] = fun(xs[i])
    best = int(np.argmax(fs))
    return xs[best], fs[best]


def maximize(
    crit: Criterion,
    box: BoxDomain,
    cfg: Optional[MaximizeConfig] = None,
    reference=None,
    param_names: tuple = (),
) -> FitResult:
    """Near-maximizer of ``crit`` over ``box``.

    The returned value is at least the best lattice value and at least
    ``crit(reference)`` when a reference inside the box is supplied.  A NaN
    criterion raises ``CriterionError``.
    """
    cfg = cfg or MaximizeConfig()
    track = _Tracker(crit, box)
    evals_before = crit.evaluations
    points = box.lattice(cfg.grid_points)
    values = np.array([track(p) for p in points])
    starts = _lattice_starts(points, values, cfg.grid_points, cfg.n_starts, cfg.tie_tol)

    ref = None
    ref_value = None
    if reference is not None:
        ref = np.atleast_1d(np.asarray(reference, dtype=float))
        if not box.contains(ref):
            raise DomainError(f"reference {ref.tolist()} lies outside {box!r}")
        ref_value = track(ref)
        if math.isfinite(ref_value):
            starts.append((ref, ref_value))

    feasible = bool(starts)
    if not feasible:
        return FitResult(
            eta_hat=None,
            criterion_value=-math.inf,
            evaluations=crit.evaluations - evals_before,
            trace=track.trace,
            feasible_start_found=False,
            status="degenerate",
            reference=ref,
            reference_value=ref_value,
            param_names=tuple(param_names),
        )

    step = cfg.step_fraction * box.width / (cfg.grid_points - 1)
    for x, f in starts:
        x = np.asarray(x, dtype=float)
        for _ in range(cfg.max_restarts + 1):
            x_new, f_new = _nelder_mead(track, box, x, f, step, cfg.max_iter, cfg.xtol)
            improved = f_new > f + cfg.tie_tol
            x, f = x_new, max(f, f_new)
            if not improved:
                break

    eta_hat = track.best_x
    return FitResult(
        eta_hat=eta_hat,
        criterion_value=track.best_f,
        evaluations=crit.evaluations - evals_before,
        trace=track.trace,
        feasible_start_found=True,
        status="success",
        reference=ref,
        reference_value=ref_value,
        on_boundary=box.on_boundary(eta_hat),
        param_names=tuple(param_names),
    )


def fit_mle(link: LinkSpec, row: DesignRow, box: BoxDomain, cfg: Optional[MaximizeConfig] = None, reference=None) -> FitResult:
    """Conditional maximum likelihood: ``maximize`` on the log-score criterion."""
    return maximize(log_score_criterion(link, row), box, cfg, reference, param_names=link.param_names)


def fit_optimum_score(
    rule,
    link: LinkSpec,
    row: DesignRow,
    box: BoxDomain,
    cfg: Optional[MaximizeConfig] = None,
    reference=None,
) -> FitResult:
    """Optimum score estimation for any rule built by ``scoring.make_rule``."""
    if isinstance(rule, str):
        rule = make_rule(rule)
    return maximize(score_criterion(rule, link, row), box, cfg, reference, param_names=link.param_names)
