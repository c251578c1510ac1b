"""Command-line front end: ``mestim simulate|fit|experiment|check``.

Exit codes: 0 success, 2 configuration or data error, 3 degenerate fit,
4 experiment threshold failure, 5 diagnostic failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .checks import run_check
from .config import RunConfig, load_config, require
from .designs import read_covariates
from .distributions import DomainError
from .harness.config import ConfigError, ExperimentConfig, ModelSpec, build_model
from .harness.experiment import ExperimentError, cell_seed, run_consistency
from .harness.report import atomic_write, cell_path, emit_report, read_cell, write_cell

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DEGENERATE = 3
EXIT_THRESHOLD = 4
EXIT_DIAGNOSTIC = 5

OUT_ENV = "MESTIM_OUT"
DEFAULT_OUT = "mestim-out"

log = logging.getLogger("mestim")


class DataError(ValueError):
    pass


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _out_root(args, cfg: RunConfig) -> Path:
    if args.out:
        return Path(args.out)
    if os.environ.get(OUT_ENV):
        return Path(os.environ[OUT_ENV])
    return Path(cfg.data.get("out", DEFAULT_OUT))


def _seed(args, cfg: RunConfig, section: dict, *path) -> int:
    """``--seed`` wins, then the section's seed, then the top-level seed."""
    if args.seed is not None:
        return int(args.seed)
    if isinstance(section, dict) and "seed" in section:
        if not isinstance(section["seed"], int):
            raise cfg.error("seed must be an integer", *path, "seed")
        return section["seed"]
    if "seed" in cfg.data:
        return int(cfg.data["seed"])
    raise cfg.error("no seed given: set 'seed' in the config or pass --seed", *path, "seed")


def _manifest(cmd: str, args, cfg: RunConfig, seed, started: str, extra: dict = None) -> dict:
    return {
        "subcommand": cmd,
        "config_path": cfg.path,
        "config_text": cfg.text,
        "config": cfg.data,
        "tool_version": __version__,
        "master_seed": seed,
        "started": started,
        "finished": _now(),
        **(extra or {}),
    }


def _write_json(path: Path, obj) -> None:
    atomic_write(path, json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def _section(cfg: RunConfig, name: str) -> dict:
    if name not in cfg.data:
        raise cfg.error(f"missing required section {name!r}", name)
    return cfg.data[name]


# --------------------------------------------------------------------------
# simulate


def cmd_simulate(args, cfg: RunConfig) -> int:
    started = _now()
    sec = _section(cfg, "simulate")
    sim_id = str(sec.get("id", "simulate"))
    model_name = require(cfg, sec, "model", "simulate")
    eta0 = require(cfg, sec, "eta0", "simulate")
    n = require(cfg, sec, "n", "simulate")
    if not isinstance(n, int) or n < 1:
        raise cfg.error("n must be a positive integer", "simulate", "n")
    seed = _seed(args, cfg, sec, "simulate")
    spec = ModelSpec(model=model_name, eta0=tuple(eta0), model_options=sec.get("model_options", {}),
                     design=sec.get("design", "uniform"), design_options=sec.get("design_options", {}))
    model = build_model(spec)
    root = _out_root(args, cfg) / sim_id
    extra = {"n": n}
    if model.kind == "blockmax":
        extra["block_size"] = model.block_size(n)
        extra["block_size_rule"] = str(model.block_rule)
    if args.dry_run:
        print(json.dumps({"plan": "simulate", "out": str(root), "seed": seed, **extra}, sort_keys=True))
        return EXIT_OK
    row = model.generate(n, seed)
    x = row.covariates
    y = row.maxima if model.kind == "blockmax" else row.responses
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow([f"x{j}" for j in range(x.shape[1])] + ["maxima" if model.kind == "blockmax" else "y"])
    for xi, yi in zip(x, y):
        w.writerow([repr(float(v)) for v in xi] + [repr(float(yi))])
    atomic_write(root / "data.csv", buf.getvalue())
    _write_json(root / "manifest.json", _manifest("simulate", args, cfg, seed, started, extra))
    print(f"wrote {n} rows to {root / 'data.csv'}")
    return EXIT_OK


# --------------------------------------------------------------------------
# fit


def read_data(path) -> tuple:
    """Covariates and responses from a CSV whose last column is the response."""
    try:
        table = read_covariates(path)
    except (OSError, DomainError) as exc:
        raise DataError(str(exc)) from None
    if table.shape[1] < 2:
        raise DataError(f"{path}: need at least one covariate column and a response column")
    return table[:, :-1], table[:, -1]


def cmd_fit(args, cfg: RunConfig) -> int:
    started = _now()
    sec = _section(cfg, "fit")
    fit_id = str(sec.get("id", "fit"))
    data_path = args.data or sec.get("data")
    if not data_path:
        raise cfg.error("no data given: set 'data' or pass --data", "fit", "data")
    spec = ModelSpec(
        model=require(cfg, sec, "model", "fit"),
        eta0=tuple(sec["eta0"]) if "eta0" in sec else None,
        lower=tuple(require(cfg, sec, "lower", "fit")),
        upper=tuple(require(cfg, sec, "upper", "fit")),
        rule=sec.get("rule", "log"),
        rule_options=sec.get("rule_options", {}),
        model_options=sec.get("model_options", {}),
        design=sec.get("design", "uniform"),
        design_options=sec.get("design_options", {}),
        optimizer=sec.get("optimizer", {}),
        seed=_seed(args, cfg, sec, "fit") if sec.get("rule", "log") in ("energy", "crps") else 0,
    )
    model = build_model(spec)
    root = _out_root(args, cfg) / fit_id
    if args.dry_run:
        print(json.dumps({"plan": "fit", "data": str(data_path), "out": str(root)}, sort_keys=True))
        return EXIT_OK
    x, y = read_data(data_path)
    res = model.fit(model.row_from_arrays(x, y))
    out = {
        "model": spec.model,
        "rule": getattr(getattr(model, "rule", None), "name", "log"),
        "n": int(y.size),
        "fit": res.to_dict(),
    }
    _write_json(root / "fit.json", out)
    _write_json(root / "manifest.json", _manifest("fit", args, cfg, spec.seed, started, {"data": str(data_path)}))
    print(json.dumps(out, sort_keys=True, default=_json_default))
    return EXIT_OK if res.success else EXIT_DEGENERATE


# --------------------------------------------------------------------------
# experiment


def _experiments(args, cfg: RunConfig) -> list:
    exps = _section(cfg, "experiments")
    out = []
    for i, e in enumerate(exps):
        d = dict(e)
        d["seed"] = _seed(args, cfg, e, "experiments", i)
        try:
            out.append(ExperimentConfig.from_dict(d))
        except ConfigError as exc:
            raise cfg.error(str(exc), "experiments", i, *([exc.field] if exc.field else [])) from None
        except (TypeError, ValueError) as exc:
            raise cfg.error(str(exc), "experiments", i) from None
    return out


def cmd_experiment(args, cfg: RunConfig) -> int:
    started = _now()
    exps = _experiments(args, cfg)
    root = _out_root(args, cfg)
    if args.dry_run:
        for e in exps:
            cells = [(n, r) for n in e.n_schedule for r in range(e.reps)]
            done = sum(cell_path(root, e.id, n, r).exists() for n, r in cells)
            plan = {
                "experiment": e.id,
                "model": e.model,
                "rule": e.rule,
                "n_schedule": list(e.n_schedule),
                "reps": e.reps,
                "seed": e.seed,
                "cells": len(cells),
                "cells_done": done,
                "config_hash": e.config_hash(),
                "out": str(root / e.id),
            }
            print(json.dumps(plan, sort_keys=True))
        return EXIT_OK
    code = EXIT_OK
    for e in exps:
        build_model(e)  # fail early on model errors
        names = build_model(e).param_names
        try:
            report = run_consistency(
                e,
                jobs=args.jobs,
                cell_cache=lambda n, r, e=e: read_cell(root, e.id, n, r),
                on_record=lambda rec, e=e: write_cell(root, e.id, rec, names),
            )
        except ExperimentError as exc:
            log.error("%s: %s", e.id, exc)
            if exc.report is not None:
                emit_report(exc.report, root)
            code = max(code, EXIT_DEGENERATE)
            continue
        emit_report(report, root)
        failures = report.threshold_failures()
        verdict = "pass" if not failures else "fail"
        print(f"{e.id}: medians={[round(float(m), 6) for m in report.medians]} {verdict}"
              + ("" if not failures else " (" + "; ".join(failures) + ")"))
        if failures and e.acceptance:
            code = max(code, EXIT_THRESHOLD)
        _write_json(root / e.id / "manifest.json", _manifest("experiment", args, cfg, e.seed, started,
                                                             {"experiment": e.id, "config_hash": e.config_hash()}))
    return code


# --------------------------------------------------------------------------
# check


def cmd_check(args, cfg: RunConfig) -> int:
    started = _now()
    checks = _section(cfg, "checks")
    seed = _seed(args, cfg, {}, "checks")
    root = _out_root(args, cfg) / "checks"
    if args.dry_run:
        for c in checks:
            print(json.dumps({"plan": "check", "name": c["name"], "seed": seed}, sort_keys=True))
        return EXIT_OK
    results = []
    for i, c in enumerate(checks):
        try:
            res = run_check(c, seed)
        except ConfigError as exc:
            raise cfg.error(str(exc), "checks", i, *([exc.field] if exc.field else [])) from None
        print(f"{res.name}: {res.status}")
        results.append(res.to_dict())
    _write_json(root / "checks.json", {"seed": seed, "results": results})
    _write_json(root / "manifest.json", _manifest("check", args, cfg, seed, started))
    return EXIT_DIAGNOSTIC if any(r["status"] == "fail" for r in results) else EXIT_OK


# --------------------------------------------------------------------------


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "experiment": cmd_experiment,
    "check": cmd_check,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mestim", description="Simulate, fit and check M-estimators for regression models.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="YAML run configuration")
        s.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
        s.add_argument("--jobs", type=int, default=1, help="worker processes (0 = all cores)")
        s.add_argument("--out", default=None, help=f"output root (else ${OUT_ENV}, else the config's 'out')")
        s.add_argument("--dry-run", action="store_true", help="print the resolved plan and exit")
        if name == "fit":
            s.add_argument("--data", default=None, help="CSV with covariate columns and a final response column")
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
