"""Consistency experiments, diagnostics and report files."""
from .config import BlockMaxModel, ConfigError, ExperimentConfig, RegressionModel, build_model
from .diagnostics import (
    TailEnvelopeReport,
    envelope_from_samples,
    population_criterion,
    population_criterion_drop,
    tail_envelope_diagnostic,
)
from .experiment import CellRecord, ConsistencyReport, ExperimentError, cell_seed, run_cell, run_consistency
from .report import emit_report, read_cell, read_records, summary_dict, validate_summary, write_cell

__all__ = [
    "BlockMaxModel",
    "CellRecord",
    "ConfigError",
    "ConsistencyReport",
    "ExperimentConfig",
    "ExperimentError",
    "RegressionModel",
    "TailEnvelopeReport",
    "build_model",
    "cell_seed",
    "emit_report",
    "envelope_from_samples",
    "population_criterion",
    "population_criterion_drop",
    "read_cell",
    "read_records",
    "run_cell",
    "run_consistency",
    "summary_dict",
    "tail_envelope_diagnostic",
    "validate_summary",
    "write_cell",
]
