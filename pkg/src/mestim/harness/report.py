"""CSV and JSON output for consistency experiments.

Layout under the output root::

    {id}/{n}/{rep}.csv    one record per replication
    {id}/raw.csv          all records, long format, sorted by (n, rep)
    {id}/summary.csv      per-n statistics, long format
    {id}/summary.json     summary with config hash and seeds

Floats are written with ``repr`` so that parsing a file gives back the
exact values.  Every file is written to a temporary name and renamed.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from importlib import resources
from pathlib import Path

import jsonschema

from .experiment import CellRecord, ConsistencyReport

SCHEMA_VERSION = 1

BASE_COLUMNS = (
    "experiment",
    "n",
    "rep",
    "seed",
    "status",
    "error",
    "gap",
    "gap_tag",
    "criterion_value",
    "reference_value",
    "evaluations",
    "any_on_boundary",
    "block_size",
)


def atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def columns(param_names) -> tuple:
    return BASE_COLUMNS + tuple(f"eta_hat_{p}" for p in param_names) + tuple(f"err_{p}" for p in param_names)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _row(exp_id: str, rec: CellRecord) -> list:
    base = [
        exp_id, rec.n, rec.rep, rec.seed, rec.status, rec.error, rec.gap, rec.gap_tag,
        rec.criterion_value, rec.reference_value, rec.evaluations, rec.any_on_boundary, rec.block_size,
    ]
    return [_fmt(v) for v in base + list(rec.eta_hat) + list(rec.components)]


def records_to_csv(exp_id: str, records, param_names) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(columns(param_names))
    for rec in records:
        w.writerow(_row(exp_id, rec))
    return buf.getvalue()


def read_records(path) -> list:
    """Parse a raw or per-cell CSV back into ``CellRecord`` objects."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    k = (len(header) - len(BASE_COLUMNS)) // 2
    out = []
    for r in body:
        d = dict(zip(header, r))
        out.append(
            CellRecord(
                n=int(d["n"]),
                rep=int(d["rep"]),
                seed=int(d["seed"]),
                status=d["status"],
                error=float(d["error"]),
                gap=float(d["gap"]),
                gap_tag=d["gap_tag"],
                criterion_value=float(d["criterion_value"]),
                reference_value=float(d["reference_value"]),
                evaluations=int(d["evaluations"]),
                any_on_boundary=d["any_on_boundary"] == "true",
                block_size=int(d["block_size"]),
                eta_hat=tuple(float(v) for v in r[len(BASE_COLUMNS) : len(BASE_COLUMNS) + k]),
                components=tuple(float(v) for v in r[len(BASE_COLUMNS) + k :]),
            )
        )
    return out


def cell_path(root, exp_id: str, n: int, rep: int) -> Path:
    return Path(root) / exp_id / str(n) / f"{rep}.csv"


def write_cell(root, exp_id: str, rec: CellRecord, param_names) -> Path:
    path = cell_path(root, exp_id, rec.n, rec.rep)
    atomic_write(path, records_to_csv(exp_id, [rec], param_names))
    return path


def read_cell(root, exp_id: str, n: int, rep: int):
    """The stored record for ``(n, rep)``, or None if absent."""
    path = cell_path(root, exp_id, n, rep)
    if not path.exists():
        return None
    recs = read_records(path)
    return recs[0] if len(recs) == 1 else None


def _num(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None


def summary_dict(report: ConsistencyReport) -> dict:
    cfg = report.config
    per_n = []
    for s in report.summaries:
        per_n.append(
            {
                "n": s.n,
                "reps": s.reps,
                "degenerate": s.degenerate,
                "median_error": _num(s.median_error),
                "p90_error": _num(s.p90_error),
                "bootstrap_se": _num(s.bootstrap_se),
                "component_medians": [_num(v) for v in s.component_medians],
                "gaps_finite": s.gaps_finite,
                "min_gap": _num(s.min_gap),
                "gap_nonnegative_fraction": _num(s.gap_nonnegative_fraction),
                "cell_seeds": [r.seed for r in report.records if r.n == s.n],
            }
        )
    failures = report.threshold_failures()
    return {
        "schema_version": SCHEMA_VERSION,
        "experiment": cfg.id,
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "master_seed": cfg.seed,
        "param_names": list(report.param_names),
        "per_n": per_n,
        "verdicts": {
            "nonincreasing": report.nonincreasing,
            "monotone_within_noise": report.monotone_within_noise,
            "gaps_nonnegative": report.gaps_nonnegative,
            "rate_slope": _num(report.rate_slope),
            "threshold_failures": failures,
            "passed": not failures,
        },
    }


def load_schema() -> dict:
    text = resources.files("mestim").joinpath("data/summary.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def validate_summary(summary: dict) -> None:
    jsonschema.validate(summary, load_schema())


def summary_csv(report: ConsistencyReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(("experiment", "n", "statistic", "value"))
    for s in report.summaries:
        for stat in ("median_error", "p90_error", "bootstrap_se", "min_gap", "gap_nonnegative_fraction"):
            w.writerow((report.config.id, s.n, stat, _fmt(float(getattr(s, stat)))))
        for name, v in zip(report.param_names, s.component_medians):
            w.writerow((report.config.id, s.n, f"median_abs_err_{name}", _fmt(float(v))))
    return buf.getvalue()


def emit_report(report: ConsistencyReport, root, formats=("csv", "json")) -> dict:
    """Write the report files under ``root/{id}``; returns their paths."""
    exp_id = report.config.id
    base = Path(root) / exp_id
    paths = {}
    if "csv" in formats:
        for rec in report.records:
            write_cell(root, exp_id, rec, report.param_names)
        paths["raw"] = base / "raw.csv"
        atomic_write(paths["raw"], records_to_csv(exp_id, report.records, report.param_names))
        paths["summary_csv"] = base / "summary.csv"
        atomic_write(paths["summary_csv"], summary_csv(report))
    if "json" in formats:
        summary = summary_dict(report)
        validate_summary(summary)
        paths["summary_json"] = base / "summary.json"
        atomic_write(paths["summary_json"], json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return paths
