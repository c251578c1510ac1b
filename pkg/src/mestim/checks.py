"""Named diagnostic suites run from configuration.

Each check takes a mapping of options and returns a ``CheckResult`` with
status ``"pass"``, ``"advisory"`` or ``"fail"``.  Only ``"fail"`` is a hard
failure.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import blockmax as bm
from .designs import check_identifiability
from .distributions import get_family
from .harness.config import ConfigError, ModelSpec, build_design, build_model
from .harness.diagnostics import population_criterion, population_criterion_drop, tail_envelope_diagnostic
from .scoring import make_rule, propriety_sweep


@dataclass
class CheckResult:
    name: str
    status: str
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "status": self.status, "details": self.details}


def _take(opts: dict, allowed: set, required: set = frozenset()) -> dict:
    unknown = set(opts) - allowed - {"name"}
    if unknown:
        raise ConfigError(f"unknown option(s) {sorted(unknown)}", sorted(unknown)[0])
    missing = set(required) - set(opts)
    if missing:
        raise ConfigError(f"missing required field {sorted(missing)[0]!r}", sorted(missing)[0])
    return opts


def _grid(spec) -> np.ndarray:
    """A list of values, or ``{lower, upper, points}`` for an even grid."""
    if isinstance(spec, dict):
        return np.linspace(float(spec["lower"]), float(spec["upper"]), int(spec["points"]))
    return np.asarray(spec, dtype=float)


def _tail_model(opts: dict):
    base = opts.get("baseline", "pareto")
    if base not in bm.BASELINES:
        raise ConfigError(f"unknown baseline {base!r}", "baseline")
    return bm.TailModel.from_scale_link(bm.BASELINES[base](float(opts["alpha"])), opts.get("beta0", [0.0]))


def check_doa(opts: dict, seed: int) -> CheckResult:
    _take(opts, {"alpha", "beta0", "baseline", "x_grid", "y_grid", "r_schedule", "max_final_error"}, {"alpha", "y_grid", "r_schedule"})
    model = _tail_model(opts)
    x = _grid(opts.get("x_grid", {"lower": 0.0, "upper": 1.0, "points": 21}))
    rep = bm.check_doa_uniform(model, x, _grid(opts["y_grid"]), opts["r_schedule"])
    ok = rep.strictly_decreasing
    limit = opts.get("max_final_error")
    if limit is not None:
        ok = ok and rep.sup_errors[-1] < float(limit)
    return CheckResult(
        "doa-uniform",
        "pass" if ok else "fail",
        {"r": rep.r_values, "sup_errors": rep.sup_errors.tolist(), "strictly_decreasing": rep.strictly_decreasing},
    )


def check_min_maxima(opts: dict, seed: int) -> CheckResult:
    _take(opts, {"alpha", "beta0", "baseline", "design", "design_options", "schedule", "block_size", "reps", "y", "expect_divergence"},
          {"alpha", "schedule", "y"})
    model = _tail_model(opts)
    design = build_design(opts.get("design", "uniform"), opts.get("design_options", {}))
    sched = []
    for entry in opts["schedule"]:
        if isinstance(entry, (list, tuple)):
            sched.append((int(entry[0]), int(entry[1])))
        else:
            sched.append((int(entry), bm.block_size(opts.get("block_size", "(log n)^2"), int(entry))))
    rep = bm.check_min_maxima_divergence(model, design, sched, int(opts.get("reps", 200)), float(opts["y"]), seed)
    expect = bool(opts.get("expect_divergence", True))
    ok = rep.bound_respected and rep.diverging == expect
    return CheckResult(
        "min-maxima",
        "pass" if ok else "fail",
        {
            "schedule": sched,
            "frequency": [e.frequency for e in rep.entries],
            "bound": [e.bound for e in rep.entries],
            "median_min": [e.median_min for e in rep.entries],
            "bound_respected": rep.bound_respected,
            "diverging": rep.diverging,
            "expect_divergence": expect,
        },
    )


def check_identifiability_suite(opts: dict, seed: int) -> CheckResult:
    _take(opts, {"model", "model_options", "design", "design_options", "eta0", "grid", "mc_size"}, {"model", "eta0", "grid"})
    model = build_model(ModelSpec(model=opts["model"], eta0=tuple(opts["eta0"]), model_options=opts.get("model_options", {}),
                                  design=opts.get("design", "uniform"), design_options=opts.get("design_options", {})))
    grid = opts["grid"]
    if isinstance(grid, dict):
        axes = [_grid(g) for g in grid["axes"]]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
    rep = check_identifiability(model.link, model.design, opts["eta0"], grid, int(opts.get("mc_size", 2000)), seed)
    return CheckResult(
        "identifiability",
        "pass" if rep.identified else "fail",
        {"violations": [v.tolist() for v in rep.violations[:10]], "n_violations": len(rep.violations)},
    )


def check_frechet_identifiability(opts: dict, seed: int) -> CheckResult:
    _take(opts, {"beta0", "beta_grid", "link", "design", "design_options", "mc_size"}, {"beta0", "beta_grid"})
    link = opts.get("link", "loglinear")
    if link == "loglinear":
        sigma = bm.loglinear_scale
    elif link == "constant":
        def sigma(beta, x):
            return np.full(np.asarray(x).shape[0], math.exp(float(np.atleast_1d(beta)[0])))
    else:
        raise ConfigError(f"unknown scale link {link!r}", "link")
    design = build_design(opts.get("design", "uniform"), opts.get("design_options", {}))
    grid = np.asarray(opts["beta_grid"], dtype=float).reshape(-1, 1) if np.ndim(opts["beta_grid"]) == 1 else opts["beta_grid"]
    rep = bm.check_frechet_identifiability(opts["beta0"], grid, design, sigma, int(opts.get("mc_size", 2000)), seed)
    return CheckResult(
        "frechet-identifiability",
        "pass" if rep.identified else "fail",
        {"violations": [v.tolist() for v in rep.violations[:10]], "n_violations": len(rep.violations)},
    )


def check_propriety(opts: dict, seed: int) -> CheckResult:
    _take(opts, {"rule", "rule_options", "family", "lower", "upper", "n_pairs", "mc_size", "separation"}, {"rule", "family", "lower", "upper"})
    rule = make_rule(opts["rule"], **opts.get("rule_options", {}))
    rep = propriety_sweep(rule, get_family(opts["family"]), opts["lower"], opts["upper"],
                          n_pairs=int(opts.get("n_pairs", 50)), mc_size=int(opts.get("mc_size", 100_000)),
                          seed=seed, separation=float(opts.get("separation", 0.1)))
    return CheckResult(
        "propriety",
        "pass" if rep.passed else "fail",
        {"rule": rep.rule, "pairs": len(rep.rows), "failures": len(rep.failures),
         "min_z": min(r.gap / r.se if r.se > 0 else math.inf for r in rep.rows)},
    )


_SPEC_KEYS = {"model", "eta0", "model_options", "design", "design_options", "rule", "rule_options"}


def _spec(opts: dict, seed: int) -> ModelSpec:
    return ModelSpec(model=opts["model"], eta0=tuple(opts["eta0"]), model_options=opts.get("model_options", {}),
                     design=opts.get("design", "uniform"), design_options=opts.get("design_options", {}),
                     rule=opts.get("rule", "log"), rule_options=opts.get("rule_options", {}), seed=seed)


def check_population_criterion(opts: dict, seed: int) -> CheckResult:
    _take(opts, _SPEC_KEYS | {"grid", "mc_size", "separation"}, {"model", "eta0", "grid"})
    model = build_model(_spec(opts, seed))
    eta0 = np.asarray(opts["eta0"], dtype=float)
    mc = int(opts.get("mc_size", 20_000))
    sep = float(opts.get("separation", 0.25))
    rule = model.rule if hasattr(model, "rule") else make_rule("log")
    v0 = population_criterion(model, rule, eta0, mc, seed)
    bad = []
    drops = []
    for eta in np.atleast_2d(np.asarray(opts["grid"], dtype=float)):
        if np.linalg.norm(eta - eta0) <= sep:
            continue
        d = population_criterion_drop(model, rule, eta, mc, seed)
        drops.append(d.value)
        if not (d.value == math.inf or d.value > 3.0 * d.se):
            bad.append(eta.tolist())
    return CheckResult(
        "population-criterion",
        "pass" if not bad else "fail",
        {"value_at_eta0": v0.value, "se": v0.se, "compared": len(drops), "violations": bad},
    )


def check_tail_envelope(opts: dict, seed: int) -> CheckResult:
    _take(opts, _SPEC_KEYS | {"cells", "t_grid", "mc_size"}, {"model", "eta0", "cells", "t_grid"})
    model = build_model(_spec(opts, seed))
    rule = model.rule if hasattr(model, "rule") else make_rule("log")
    rep = tail_envelope_diagnostic(model, rule, np.asarray(opts["eta0"], dtype=float), [tuple(c) for c in opts["cells"]],
                                   _grid(opts["t_grid"]), int(opts.get("mc_size", 20_000)), seed)
    return CheckResult(
        "tail-envelope",
        rep.verdict,
        {"second_moment": rep.second_moment, "slope": rep.slope, "heavy_tail": rep.heavy_tail},
    )


CHECKS = {
    "doa-uniform": check_doa,
    "min-maxima": check_min_maxima,
    "identifiability": check_identifiability_suite,
    "frechet-identifiability": check_frechet_identifiability,
    "propriety": check_propriety,
    "population-criterion": check_population_criterion,
    "tail-envelope": check_tail_envelope,
}


def run_check(opts: dict, seed: int) -> CheckResult:
    name = opts.get("name")
    if name not in CHECKS:
        raise ConfigError(f"unknown check {name!r}", "name")
    try:
        return CHECKS[name](dict(opts), seed)
    except KeyError as exc:
        raise ConfigError(f"missing option {exc.args[0]!r}", exc.args[0]) from None
