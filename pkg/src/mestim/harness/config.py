"""Experiment configuration and the models it names."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from .. import blockmax as bm
from ..designs import (
    LINKS,
    UNIFORM,
    CovariateDesign,
    DesignRow,
    constant_design,
    file_design,
    frechet_scale_link,
    generate_row,
    halton_design,
    loglinear_scale,
)
from ..distributions import DomainError
from ..estimator import BoxDomain, FitResult, MaximizeConfig, fit_mle, fit_optimum_score
from ..scoring import LogScore, make_rule
from ..streams import open_uniform

BLOCKMAX_MODEL = "frechet-blockmax"


class ConfigError(DomainError):
    """Invalid experiment configuration; ``field`` names the offending entry."""

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message)
        self.field = field


@dataclass(frozen=True)
class ExperimentConfig:
    """One consistency experiment.

    ``model`` is a link name from ``designs.LINKS`` or ``"frechet-blockmax"``.
    For block maxima ``eta0`` is ``(alpha0, beta0..., 1)`` and the box ranges
    over ``(alpha, beta..., gamma)``.
    """

    id: str
    model: str
    eta0: tuple
    lower: tuple
    upper: tuple
    n_schedule: tuple
    reps: int
    seed: int
    rule: str = "log"
    rule_options: dict = field(default_factory=dict)
    model_options: dict = field(default_factory=dict)
    design: str = "uniform"
    design_options: dict = field(default_factory=dict)
    optimizer: dict = field(default_factory=dict)
    thresholds: dict = field(default_factory=dict)
    acceptance: bool = False

    def __post_init__(self):
        for name in ("eta0", "lower", "upper", "n_schedule"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "n_schedule", tuple(int(n) for n in self.n_schedule))
        object.__setattr__(self, "eta0", tuple(float(v) for v in self.eta0))
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))
        if not self.id or "/" in self.id or "\\" in self.id:
            raise ConfigError(f"invalid experiment id {self.id!r}", "id")
        if self.seed is None:
            raise ConfigError("a master seed is required", "seed")
        if int(self.reps) < 1:
            raise ConfigError("reps must be at least 1", "reps")
        ns = self.n_schedule
        if not ns or ns[0] < 1 or any(b <= a for a, b in zip(ns, ns[1:])):
            raise ConfigError("n_schedule must be positive and strictly increasing", "n_schedule")
        k = len(self.eta0)
        if len(self.lower) != k or len(self.upper) != k:
            raise ConfigError("eta0, lower and upper must have equal length", "eta0")
        for lo, e, hi in zip(self.lower, self.eta0, self.upper):
            if not (lo < e < hi):
                raise ConfigError(f"eta0 must be interior to the box, got {self.eta0}", "eta0")
        unknown = set(self.thresholds) - {"final_median_error", "monotone", "gap_nonnegative", "final_component_median"}
        if unknown:
            raise ConfigError(f"unknown threshold keys {sorted(unknown)}", "thresholds")
        for key, v in self.thresholds.items():
            if key in ("monotone", "gap_nonnegative"):
                ok = isinstance(v, bool)
            else:
                vals = v if isinstance(v, (list, tuple)) else [v]
                ok = bool(vals) and all(isinstance(u, (int, float)) and not isinstance(u, bool) for u in vals)
            if not ok:
                raise ConfigError(f"threshold {key!r} has invalid value {v!r}", "thresholds")
        try:
            MaximizeConfig(**self.optimizer)
        except TypeError as exc:
            raise ConfigError(f"invalid optimizer options: {exc}", "optimizer") from None

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown experiment keys {sorted(unknown)}", sorted(unknown)[0])
        required = {"id", "model", "eta0", "lower", "upper", "n_schedule", "reps", "seed"}
        missing = required - set(d)
        if missing:
            raise ConfigError(f"missing required experiment field {sorted(missing)[0]!r}", sorted(missing)[0])
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("eta0", "lower", "upper", "n_schedule"):
            d[k] = list(d[k])
        return d

    def model_spec(self) -> "ModelSpec":
        return ModelSpec(
            model=self.model,
            eta0=self.eta0,
            lower=self.lower,
            upper=self.upper,
            rule=self.rule,
            rule_options=self.rule_options,
            model_options=self.model_options,
            design=self.design,
            design_options=self.design_options,
            optimizer=self.optimizer,
            seed=self.seed,
        )

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


# --------------------------------------------------------------------------
# models


@dataclass(frozen=True)
class ModelSpec:
    """What is needed to generate rows and fit them.

    ``eta0`` is the data-generating parameter (optional when only fitting;
    it then serves as the reference point if it lies in the box).  ``lower``
    and ``upper`` bound the search box and are optional when only
    generating.  ``seed`` feeds the energy score's fixed uniforms unless the
    rule options name their own.
    """

    model: str
    eta0: Optional[tuple] = None
    lower: Optional[tuple] = None
    upper: Optional[tuple] = None
    rule: str = "log"
    rule_options: dict = field(default_factory=dict)
    model_options: dict = field(default_factory=dict)
    design: str = "uniform"
    design_options: dict = field(default_factory=dict)
    optimizer: dict = field(default_factory=dict)
    seed: int = 0


def build_design(name: str, options: dict) -> CovariateDesign:
    if name == "uniform":
        if options:
            raise ConfigError("uniform design takes no options", "design_options")
        return UNIFORM
    if name == "halton":
        return halton_design(options["lower"], options["upper"])
    if name == "constant":
        return constant_design(options["x"])
    if name == "file":
        return file_design(options["path"])
    raise ConfigError(f"unknown design {name!r}", "design")


def _vec(v) -> Optional[np.ndarray]:
    return None if v is None else np.array(v, dtype=float)


class RegressionModel:
    """Parametric family with a link: rows from ``generate_row``, fits via the scoring rule."""

    kind = "regression"

    def __init__(self, spec: ModelSpec):
        if spec.model not in LINKS:
            raise ConfigError(f"unknown model {spec.model!r}", "model")
        try:
            self.link = LINKS[spec.model](**spec.model_options)
        except TypeError as exc:
            raise ConfigError(f"invalid model options: {exc}", "model_options") from None
        self.design = build_design(spec.design, spec.design_options)
        self.eta0 = _vec(spec.eta0)
        for name in ("eta0", "lower", "upper"):
            v = getattr(spec, name)
            if v is not None and len(v) != self.link.n_params:
                raise ConfigError(f"model {spec.model!r} has {self.link.n_params} parameters", name)
        self.box = None if spec.lower is None else BoxDomain(spec.lower, spec.upper)
        self.opt = MaximizeConfig(**spec.optimizer)
        opts = dict(spec.rule_options)
        if spec.rule in ("energy", "crps"):
            opts.setdefault("seed", spec.seed)
        try:
            self.rule = make_rule(spec.rule, **opts)
        except TypeError as exc:
            raise ConfigError(f"invalid rule options: {exc}", "rule_options") from None
        self.param_names = self.link.param_names

    def generate(self, n: int, seed: int) -> DesignRow:
        if self.eta0 is None:
            raise ConfigError("generating data needs eta0", "eta0")
        return generate_row(self.design, self.link, self.eta0, n, seed)

    def row_from_arrays(self, x: np.ndarray, y: np.ndarray) -> DesignRow:
        return DesignRow(n=y.size, covariates=x, responses=y, kernel="file")

    def _reference(self):
        if self.eta0 is not None and self.box.contains(self.eta0):
            return self.eta0
        return None

    def fit(self, row: DesignRow) -> FitResult:
        if self.box is None:
            raise ConfigError("fitting needs the search box (lower, upper)", "lower")
        if isinstance(self.rule, LogScore):
            return fit_mle(self.link, row, self.box, self.opt, reference=self._reference())
        return fit_optimum_score(self.rule, self.link, row, self.box, self.opt, reference=self._reference())

    def error_components(self, eta_hat) -> np.ndarray:
        return np.asarray(eta_hat, dtype=float) - self.eta0

    # limit law for population-level diagnostics
    def limit_link(self):
        return self.link

    def limit_eta0(self):
        return self.eta0

    def sample_responses(self, n: int, x: np.ndarray, rng) -> np.ndarray:
        """Responses of row ``n`` at covariates ``x`` (rows do not depend on ``n`` here)."""
        theta = self.link.theta(x, self.eta0)
        return np.asarray(self.link.family.sample(theta, rng, x.shape[0]), dtype=float).reshape(-1)


class BlockMaxModel:
    """Heteroscedastic block maxima fitted by Frechet regression.

    Parameters are ``(alpha, beta..., gamma)`` with ``tau = gamma * scaling``;
    the generating ``eta0`` must end in ``gamma = 1``.
    """

    kind = "blockmax"

    def __init__(self, spec: ModelSpec):
        opts = dict(spec.model_options)
        unknown = set(opts) - {"baseline", "block_size", "scaling", "materialize"}
        if unknown:
            raise ConfigError(f"unknown blockmax options {sorted(unknown)}", "model_options")
        if spec.rule not in ("log", "mle"):
            raise ConfigError("block maxima are fitted by likelihood; rule must be 'log'", "rule")
        self.block_rule = opts.get("block_size", "(log n)^2")
        try:
            bm.block_size(self.block_rule, 2)
        except DomainError as exc:
            raise ConfigError(str(exc), "model_options") from None
        self.scaling = opts.get("scaling", "true")
        if self.scaling not in ("true", "median"):
            raise ConfigError("scaling must be 'true' or 'median'", "model_options")
        self.materialize = bool(opts.get("materialize", False))
        self.design = build_design(spec.design, spec.design_options)
        d = self.design.dim
        self.param_names = ("alpha", *[f"beta{j}" for j in range(d)], "gamma")
        for name in ("eta0", "lower", "upper"):
            v = getattr(spec, name)
            if v is not None and len(v) != d + 2:
                raise ConfigError(f"frechet-blockmax with {d} covariate(s) needs {d + 2} parameters", name)
        self.eta0 = _vec(spec.eta0)
        self.baseline_name = opts.get("baseline", "pareto")
        if self.baseline_name not in bm.BASELINES:
            raise ConfigError(f"unknown baseline {self.baseline_name!r}", "model_options")
        if self.eta0 is not None:
            if self.eta0[-1] != 1.0:
                raise ConfigError("the last entry of eta0 (gamma) must be 1", "eta0")
            if not self.eta0[0] > 0:
                raise ConfigError("alpha0 must be positive", "eta0")
            self.alpha0 = float(self.eta0[0])
            self.beta0 = self.eta0[1:-1]
            self.baseline = bm.BASELINES[self.baseline_name](self.alpha0)
            self.tail = bm.TailModel.from_scale_link(self.baseline, self.beta0)
        elif self.scaling == "true":
            raise ConfigError("scaling 'true' needs eta0 to compute a_r", "eta0")
        self.lower = _vec(spec.lower)
        self.upper = _vec(spec.upper)
        self.opt = MaximizeConfig(**spec.optimizer)

    def block_size(self, n: int) -> int:
        return bm.block_size(self.block_rule, n)

    def generate(self, n: int, seed: int) -> bm.BlockMaxRow:
        if self.eta0 is None:
            raise ConfigError("generating data needs eta0", "eta0")
        return bm.sample_block_maxima(self.tail, self.design, n, self.block_size(n), seed, self.materialize)

    def row_from_arrays(self, x: np.ndarray, y: np.ndarray) -> bm.BlockMaxRow:
        return bm.BlockMaxRow(n=y.size, block_size=self.block_size(y.size), covariates=x, maxima=y)

    def fit(self, row: bm.BlockMaxRow) -> FitResult:
        if self.lower is None:
            raise ConfigError("fitting needs the search box (lower, upper)", "lower")
        if self.eta0 is not None:
            a_r = float(self.baseline.norming(row.block_size))
            scaling = a_r if self.scaling == "true" else bm.median_scaling(row)
            ref = np.concatenate([[self.alpha0], self.beta0, [a_r / scaling]])
            inside = bool(np.all(ref >= self.lower) and np.all(ref <= self.upper))
        else:
            a_r, scaling, ref, inside = None, bm.median_scaling(row), None, False
        d = self.design.dim
        ff = bm.fit_frechet(
            row,
            alpha_bounds=(self.lower[0], self.upper[0]),
            beta_bounds=(self.lower[1 : 1 + d], self.upper[1 : 1 + d]),
            gamma_bounds=(self.lower[-1], self.upper[-1]),
            scaling=scaling,
            cfg=self.opt,
            reference=ref if inside else None,
        )
        res = ff.fit
        res.extra.update({"scaling_used": ff.scaling_used, "block_size": row.block_size, "a_r": a_r})
        return res

    def error_components(self, eta_hat) -> np.ndarray:
        e = np.asarray(eta_hat, dtype=float) - self.eta0
        e[-1] = math.log(eta_hat[-1])
        return e

    def limit_link(self):
        return frechet_scale_link(loglinear_scale, scaling=1.0, dim=self.design.dim)

    def limit_eta0(self):
        return self.eta0

    def sample_responses(self, n: int, x: np.ndarray, rng) -> np.ndarray:
        """Block maxima of row ``n`` at ``x``, divided by ``a_{r_n}``."""
        r = self.block_size(n)
        c = np.asarray(self.tail.c(x), dtype=float).reshape(-1)
        m = bm.block_maxima_from_uniforms(self.tail, c, open_uniform(rng, c.size), r)
        return m / float(self.baseline.norming(r))


def build_model(spec):
    """Model for a ``ModelSpec`` or an ``ExperimentConfig``."""
    if isinstance(spec, ExperimentConfig):
        spec = spec.model_spec()
    try:
        if spec.model == BLOCKMAX_MODEL:
            return BlockMaxModel(spec)
        return RegressionModel(spec)
    except KeyError as exc:
        raise ConfigError(f"missing option {exc.args[0]!r}", exc.args[0]) from None
    except DomainError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
