"""Experiment configuration: flat INI-style sections of key = value pairs,
arrays as comma lists. No environment variables; a fixed spec must always
reproduce the same run.
"""

import configparser
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    """Unusable experiment specification (maps to exit code 2)."""


def _coerce(text: str):
    text = text.strip()
    if "," in text:
        return [_coerce(tok) for tok in text.split(",") if tok.strip()]
    for caster in (int, float):
        try:
            return caster(text)
        except ValueError:
            continue
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    return text


@dataclass
class ExperimentSpec:
    """A named experiment plus its parameter overrides."""

    name: str
    params: dict = field(default_factory=dict)
    out_path: Path | None = None
    plots: bool = True

    def merged(self, defaults: dict) -> dict:
        out = dict(defaults)
        out.update(self.params)
        _validate_eps_grid(out)
        return out


def _validate_eps_grid(params: dict):
    grid = params.get("epsilon_grid")
    if grid is None:
        return
    if not isinstance(grid, list):
        raise ConfigError("epsilon_grid must be a comma list")
    vals = [float(v) for v in grid]
    if any(not (0.0 < v <= 1.0) for v in vals):
        raise ConfigError("epsilon grid entries must lie in (0, 1]")
    if any(b >= a for a, b in zip(vals, vals[1:])):
        raise ConfigError("epsilon grid must be strictly decreasing")


def load_config(path) -> dict:
    """Flatten the INI sections into one parameter dict.

    Keys are 'section.key' except for the [experiment] and [sweep]
    sections whose keys are promoted to the top level.
    """
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    params = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            value = _coerce(raw)
            if section in ("experiment", "sweep"):
                params[key] = value
            else:
                params[f"{section}.{key}"] = value
    return params
