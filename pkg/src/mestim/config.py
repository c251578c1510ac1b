"""YAML run configuration with line-numbered validation errors.

A file holds ``schema_version: 1`` plus any of the sections ``experiments``
(list), ``simulate``, ``fit`` and ``checks`` (list).  Unknown keys are
rejected.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Optional

import re

import yaml

from .harness.config import ConfigError, ExperimentConfig

SCHEMA_VERSION = 1

TOP_KEYS = {"schema_version", "seed", "out", "experiments", "simulate", "fit", "checks"}
SIMULATE_KEYS = {"id", "model", "eta0", "n", "design", "design_options", "model_options", "seed"}
FIT_KEYS = {
    "id", "model", "eta0", "lower", "upper", "rule", "rule_options", "model_options",
    "design", "design_options", "optimizer", "data", "seed",
}


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads ``1e-9`` (no dot, no exponent sign) as a float."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(
        r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
        |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
        |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
        |[-+]?\.(?:inf|Inf|INF)
        |\.(?:nan|NaN|NAN))$""",
        re.X,
    ),
    list("-+0123456789."),
)


@dataclass
class RunConfig:
    data: dict
    text: str
    path: Optional[str] = None
    lines: dict = field(default_factory=dict)

    def line(self, *path) -> Optional[int]:
        """1-based line of the entry at ``path`` (or of its nearest ancestor)."""
        path = tuple(path)
        while path:
            if path in self.lines:
                return self.lines[path]
            path = path[:-1]
        return None

    def error(self, message: str, *path) -> ConfigError:
        where = self.path or "<config>"
        ln = self.line(*path)
        loc = f"{where}:{ln}" if ln else where
        name = ".".join(str(p) for p in path) if path else None
        field_txt = f" field '{name}':" if name else ""
        return ConfigError(f"{loc}:{field_txt} {message}", name)


def _line_map(node, prefix=(), out=None) -> dict:
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = prefix + (k.value,)
            out[key] = k.start_mark.line + 1
            _line_map(v, key, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            key = prefix + (i,)
            out[key] = v.start_mark.line + 1
            _line_map(v, key, out)
    return out


def parse_config(text: str, path: Optional[str] = None) -> RunConfig:
    try:
        node = yaml.compose(text, Loader=_Loader)
        data = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path or '<config>'}: invalid YAML: {exc}") from None
    cfg = RunConfig(data=data if data is not None else {}, text=text, path=path,
                    lines=_line_map(node) if node is not None else {})
    validate(cfg)
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path))


def _check_keys(cfg: RunConfig, section: dict, allowed: set, *path):
    if not isinstance(section, dict):
        raise cfg.error("expected a mapping", *path)
    for k in section:
        if k not in allowed:
            raise cfg.error(f"unknown key {k!r}", *path, k)


def validate(cfg: RunConfig) -> None:
    d = cfg.data
    if not isinstance(d, dict):
        raise cfg.error("top level must be a mapping")
    _check_keys(cfg, d, TOP_KEYS)
    if "schema_version" not in d:
        raise cfg.error("missing required field 'schema_version'")
    if d["schema_version"] != SCHEMA_VERSION:
        raise cfg.error(f"unsupported schema version {d['schema_version']!r}", "schema_version")
    if "seed" in d and not isinstance(d["seed"], int):
        raise cfg.error("seed must be an integer", "seed")
    if "experiments" in d:
        if not isinstance(d["experiments"], list) or not d["experiments"]:
            raise cfg.error("experiments must be a non-empty list", "experiments")
        allowed = {f.name for f in fields(ExperimentConfig)}
        ids = set()
        for i, e in enumerate(d["experiments"]):
            _check_keys(cfg, e, allowed, "experiments", i)
            if e.get("id") in ids:
                raise cfg.error(f"duplicate experiment id {e.get('id')!r}", "experiments", i, "id")
            ids.add(e.get("id"))
    if "simulate" in d:
        _check_keys(cfg, d["simulate"], SIMULATE_KEYS, "simulate")
    if "fit" in d:
        _check_keys(cfg, d["fit"], FIT_KEYS, "fit")
    if "checks" in d:
        if not isinstance(d["checks"], list) or not d["checks"]:
            raise cfg.error("checks must be a non-empty list", "checks")
        for i, c in enumerate(d["checks"]):
            if not isinstance(c, dict) or "name" not in c:
                raise cfg.error("each check needs a 'name'", "checks", i)


def require(cfg: RunConfig, section: dict, key: str, *path):
    if key not in section:
        raise cfg.error(f"missing required field {key!r}", *path, key)
    return section[key]
