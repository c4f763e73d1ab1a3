"""Scenario (de)serialisation: flat JSON objects, durations with unit suffixes."""
from __future__ import annotations

import json
import math
import re
from dataclasses import fields
from pathlib import Path
from typing import Any, Union

from .netsim import ConfigError, ScenarioConfig, preset_config

DURATION_FIELDS = frozenset({
    "owd", "access_owd", "far_access_owd", "duration", "start_window", "pie_target",
    "pie_update_interval", "pie_max_burst", "tau_dd", "codel_target", "codel_interval",
})
_UNITS = {"ns": 1, "us": 1_000, "ms": 1_000_000, "s": 1_000_000_000}
_DUR_RE = re.compile(r"^\s*([0-9]*\.?[0-9]+(?:[eE][+-]?[0-9]+)?)\s*(ns|us|ms|s)\s*$")


def parse_duration(value: Union[str, int, float]) -> Union[int, float]:
    """Normalise ``"48ms"``, ``"1.5s"`` or a bare integer (ns) to integer ns.

    ``"inf"`` is accepted and returned as ``math.inf``.
    """
    if isinstance(value, bool):
        raise ConfigError(f"invalid duration {value!r}")
    if isinstance(value, (int, float)):
        if isinstance(value, float) and math.isinf(value):
            return math.inf
        if value < 0:
            raise ConfigError(f"negative duration {value!r}")
        return int(round(value))
    text = str(value).strip().lower()
    if text in ("inf", "infinity"):
        return math.inf
    m = _DUR_RE.match(text)
    if not m:
        raise ConfigError(f"invalid duration {value!r}; expected e.g. 48ms or 300s")
    return int(round(float(m.group(1)) * _UNITS[m.group(2)]))


def format_duration(ns: Union[int, float]) -> str:
    if isinstance(ns, float) and math.isinf(ns):
        return "inf"
    ns = int(ns)
    for unit in ("s", "ms", "us"):
        if ns % _UNITS[unit] == 0 and ns != 0:
            return f"{ns // _UNITS[unit]}{unit}"
    return f"{ns}ns"


def config_to_dict(cfg: ScenarioConfig) -> dict:
    out: dict[str, Any] = {}
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if f.name in DURATION_FIELDS:
            v = format_duration(v)
        elif isinstance(v, tuple):
            v = list(v)
        out[f.name] = v
    return out


_FIELD_NAMES = {f.name for f in fields(ScenarioConfig)}


def config_from_dict(data: dict) -> ScenarioConfig:
    """Build a config; a ``preset`` key supplies defaults that other keys override."""
    unknown = set(data) - _FIELD_NAMES
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kw = {}
    for k, v in data.items():
        if k in DURATION_FIELDS:
            v = parse_duration(v)
        elif k == "queue_capacity" and v is not None:
            v = int(v)
        kw[k] = v
    preset = kw.pop("preset", "custom")
    try:
        return preset_config(preset, **kw).validate()
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def dumps(cfg: ScenarioConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2, sort_keys=True)


def loads(text: str) -> ScenarioConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return config_from_dict(data)


def load(path: Union[str, Path]) -> ScenarioConfig:
    return loads(Path(path).read_text())
