"""Monte Carlo consistency experiments."""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..streams import derive_seed, make_stream
from .config import ExperimentConfig, build_model

# gap tags
GAP_FINITE = "finite"
GAP_REFERENCE_NEG_INF = "reference-neg-inf"
GAP_NO_REFERENCE = "no-reference"
GAP_DEGENERATE = "degenerate"


class ExperimentError(RuntimeError):
    def __init__(self, message: str, report: "ConsistencyReport" = None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class CellRecord:
    """Outcome of one ``(n, rep)`` replication."""

    n: int
    rep: int
    seed: int
    status: str
    error: float
    gap: float
    gap_tag: str
    criterion_value: float
    reference_value: float
    evaluations: int
    any_on_boundary: bool
    block_size: int
    eta_hat: tuple
    components: tuple

    @property
    def degenerate(self) -> bool:
        return self.status != "success"


def cell_seed(master: int, n: int, rep: int) -> int:
    return derive_seed(master, n, rep)


_MODELS: dict = {}


def _model_for(cfg: ExperimentConfig):
    key = cfg.config_hash()
    if key not in _MODELS:
        if len(_MODELS) >= 8:
            _MODELS.clear()
        _MODELS[key] = build_model(cfg)
    return _MODELS[key]


def run_cell(cfg: ExperimentConfig, n: int, rep: int) -> CellRecord:
    """Generate the row for ``(n, rep)``, fit it and score the fit."""
    model = _model_for(cfg)
    seed = cell_seed(cfg.seed, n, rep)
    row = model.generate(n, seed)
    res = model.fit(row)
    k = len(cfg.eta0)
    r = int(getattr(row, "block_size", 1))
    ref_val = math.nan if res.reference_value is None else float(res.reference_value)
    if not res.success:
        return CellRecord(n, rep, seed, res.status, math.nan, math.nan, GAP_DEGENERATE, float(res.criterion_value),
                          ref_val, res.evaluations, False, r, (math.nan,) * k, (math.nan,) * k)
    comps = model.error_components(res.eta_hat)
    if res.reference_value is None:
        tag, gap = GAP_NO_REFERENCE, math.nan
    elif not math.isfinite(res.reference_value):
        tag, gap = GAP_REFERENCE_NEG_INF, math.nan
    else:
        tag, gap = GAP_FINITE, float(res.gap)
    return CellRecord(
        n=int(n),
        rep=int(rep),
        seed=seed,
        status=res.status,
        error=float(np.sqrt(np.sum(comps**2))),
        gap=gap,
        gap_tag=tag,
        criterion_value=float(res.criterion_value),
        reference_value=ref_val,
        evaluations=int(res.evaluations),
        any_on_boundary=bool(res.on_boundary is not None and np.any(res.on_boundary)),
        block_size=r,
        eta_hat=tuple(float(v) for v in res.eta_hat),
        components=tuple(float(v) for v in comps),
    )


def _run_cell_star(args):
    return run_cell(*args)


# --------------------------------------------------------------------------
# summaries


@dataclass(frozen=True)
class NSummary:
    n: int
    reps: int
    degenerate: int
    median_error: float
    p90_error: float
    bootstrap_se: float
    component_medians: tuple
    gaps_finite: int
    min_gap: float
    gap_nonnegative_fraction: float


def _bootstrap_se(errors: np.ndarray, seed: int, n: int, draws: int = 200) -> float:
    if errors.size < 2:
        return math.nan
    rng = make_stream(seed, n, 0xB007)
    idx = rng.integers(0, errors.size, size=(draws, errors.size))
    return float(np.std(np.median(errors[idx], axis=1), ddof=1))


def summarize_n(records: list, n: int, seed: int) -> NSummary:
    cell = [r for r in records if r.n == n]
    ok = [r for r in cell if not r.degenerate]
    err = np.array([r.error for r in ok])
    comps = np.array([r.components for r in ok]) if ok else np.empty((0, 0))
    gaps = np.array([r.gap for r in ok if r.gap_tag == GAP_FINITE])
    return NSummary(
        n=n,
        reps=len(cell),
        degenerate=len(cell) - len(ok),
        median_error=float(np.median(err)) if err.size else math.nan,
        p90_error=float(np.quantile(err, 0.9)) if err.size else math.nan,
        bootstrap_se=_bootstrap_se(err, seed, n),
        component_medians=tuple(float(v) for v in np.median(np.abs(comps), axis=0)) if ok else (),
        gaps_finite=int(gaps.size),
        min_gap=float(gaps.min()) if gaps.size else math.nan,
        gap_nonnegative_fraction=float(np.mean(gaps >= 0)) if gaps.size else math.nan,
    )


@dataclass
class ConsistencyReport:
    config: ExperimentConfig
    records: list
    param_names: tuple = ()
    summaries: list = field(default_factory=list)

    def __post_init__(self):
        self.records = sorted(self.records, key=lambda r: (r.n, r.rep))
        if not self.summaries:
            self.summaries = [summarize_n(self.records, n, self.config.seed) for n in self.config.n_schedule]

    @property
    def medians(self) -> np.ndarray:
        return np.array([s.median_error for s in self.summaries])

    def component_medians(self) -> np.ndarray:
        """``(len(n_schedule), k)`` medians of absolute error components."""
        return np.array([s.component_medians for s in self.summaries])

    @property
    def nonincreasing(self) -> bool:
        return bool(np.all(np.diff(self.medians) <= 0))

    @property
    def monotone_within_noise(self) -> bool:
        """Nonincreasing medians, allowing one rise within 1.5 bootstrap se."""
        m = self.medians
        se = np.array([s.bootstrap_se for s in self.summaries])
        rises = [k for k in range(m.size - 1) if m[k + 1] > m[k]]
        if not rises:
            return True
        if len(rises) > 1:
            return False
        k = rises[0]
        return bool(m[k + 1] - m[k] <= 1.5 * np.nanmax(se[k : k + 2]))

    @property
    def rate_slope(self) -> float:
        """Least-squares slope of log median error against log n."""
        m = self.medians
        ns = np.array(self.config.n_schedule, dtype=float)
        good = np.isfinite(m) & (m > 0)
        if good.sum() < 2:
            return math.nan
        return float(np.polyfit(np.log(ns[good]), np.log(m[good]), 1)[0])

    @property
    def gaps_nonnegative(self) -> bool:
        return all(r.gap >= 0 for r in self.records if r.gap_tag == GAP_FINITE)

    def threshold_failures(self) -> list:
        """Violated entries of ``config.thresholds``."""
        th = self.config.thresholds
        out = []
        if "final_median_error" in th and not (self.medians[-1] < th["final_median_error"]):
            out.append(f"final median error {self.medians[-1]:.4g} >= {th['final_median_error']}")
        if "final_component_median" in th:
            lim = np.broadcast_to(np.asarray(th["final_component_median"], dtype=float), self.component_medians()[-1].shape)
            if np.any(self.component_medians()[-1] >= lim):
                out.append(f"final component medians {self.component_medians()[-1].tolist()} not below {lim.tolist()}")
        if th.get("monotone") and not self.nonincreasing:
            out.append(f"median errors not nonincreasing: {self.medians.tolist()}")
        if th.get("gap_nonnegative") and not self.gaps_nonnegative:
            out.append("negative criterion gap recorded")
        return out


def run_consistency(
    cfg: ExperimentConfig,
    jobs: int = 1,
    cell_cache: Optional[Callable] = None,
    on_record: Optional[Callable] = None,
) -> ConsistencyReport:
    """Run every ``(n, rep)`` cell of ``cfg``.

    Cell ``(n, rep)`` draws its data from the seed ``derive_seed(seed, n, rep)``,
    so results do not depend on ``jobs`` or on execution order.
    ``cell_cache(n, rep)`` may return an earlier record to skip a cell;
    ``on_record`` is called with each freshly computed record.
    Raises ``ExperimentError`` when more than half the fits at some ``n`` are
    degenerate.
    """
    cells = [(n, rep) for n in cfg.n_schedule for rep in range(cfg.reps)]
    records, todo = [], []
    for n, rep in cells:
        cached = cell_cache(n, rep) if cell_cache is not None else None
        if cached is not None:
            records.append(cached)
        else:
            todo.append((n, rep))
    if jobs is None or jobs < 1:
        jobs = os.cpu_count() or 1
    if jobs == 1 or len(todo) <= 1:
        fresh = (run_cell(cfg, n, rep) for n, rep in todo)
        for rec in fresh:
            records.append(rec)
            if on_record is not None:
                on_record(rec)
    else:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            for rec in ex.map(_run_cell_star, [(cfg, n, rep) for n, rep in todo]):
                records.append(rec)
                if on_record is not None:
                    on_record(rec)
    report = ConsistencyReport(cfg, records, tuple(_model_for(cfg).param_names))
    for s in report.summaries:
        if s.degenerate * 2 > s.reps:
            raise ExperimentError(f"{s.degenerate} of {s.reps} fits degenerate at n={s.n}", report)
    return report
