"""Experiment configuration shared by the command-line front end.

A configuration is plain JSON::

    {"kernel": {"type": "fbm", "H": 0.75},
     "grid": {"T": 1.0, "n": 512},
     "xgrid": {"L": 20.0, "nx": 128},
     "truncation": {"order": 4, "dim": 16, "support": null},
     "problem": {"a": 1.0, "sigma": 1.0, "u0": "gaussian"},
     "seed": 0, "out": "chaoskit-out"}

Missing keys take the defaults below; command-line flags override file
values.  A run manifest stores the resolved configuration under
``"config"``, so a manifest can be fed back with ``--config``.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

from .evolution_spde import SpatialGrid
from .gaussian_field import KernelSpec, TimeGrid, kernel_from_dict
from .multiindex import TruncationSpec

__all__ = ["ExperimentConfig", "ConfigError", "DEFAULTS", "load_config"]


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


DEFAULTS: dict = {
    "kernel": {"type": "wiener"},
    "grid": {"T": 1.0, "n": 512},
    "xgrid": {"L": 20.0, "nx": 128},
    "truncation": {"order": 4, "dim": 16, "support": None},
    "problem": {
        "a": 1.0,
        "sigma": 1.0,
        "u0": "gaussian",
        "advection": 0.0,
        "reaction": 0.0,
        "multiplicative": 0.0,
    },
    "integrand": "associated-process",
    "integral": "skorokhod",
    "target": "covariance",
    "n_paths": 20000,
    "seed": 0,
    "out": "chaoskit-out",
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "kernel":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class ExperimentConfig:
    """Fully resolved settings of one run."""

    data: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a JSON object")
        if "config" in d and "versions" in d:  # a run manifest
            d = d["config"]
        unknown = set(d) - set(DEFAULTS) - {"command"}
        if unknown:
            raise ConfigError(f"unknown configuration keys {sorted(unknown)}")
        cfg = cls(_merge(DEFAULTS, d))
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def to_json(self) -> str:
        return json.dumps(self.data, indent=2)

    def override(self, **flat) -> "ExperimentConfig":
        """Apply ``section.key=value`` style overrides; ``None`` values are ignored."""
        d = self.to_dict()
        for key, v in flat.items():
            if v is None:
                continue
            if "." in key:
                sec, sub = key.split(".", 1)
                d.setdefault(sec, {})[sub] = v
            else:
                d[key] = v
        return ExperimentConfig.from_dict(d)

    def validate(self):
        try:
            self.kernel()
            self.grid()
            self.xgrid()
            self.truncation()
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(str(exc)) from None
        if int(self.data["n_paths"]) < 1:
            raise ConfigError("n_paths must be positive")

    def kernel(self) -> KernelSpec:
        return kernel_from_dict(self.data["kernel"])

    def grid(self) -> TimeGrid:
        g = self.data["grid"]
        return TimeGrid(float(g["T"]), int(g["n"]))

    def xgrid(self) -> SpatialGrid:
        g = self.data["xgrid"]
        return SpatialGrid(float(g["L"]), int(g["nx"]))

    def truncation(self) -> TruncationSpec:
        t = self.data["truncation"]
        s = t.get("support")
        return TruncationSpec(int(t["order"]), int(t["dim"]), None if s is None else int(s))

    @property
    def problem(self) -> dict:
        return self.data["problem"]

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    @property
    def out(self) -> Path:
        return Path(self.data["out"])


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return ExperimentConfig.from_dict(d)
