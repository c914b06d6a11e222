"""Experiment configuration: JSON, schema-validated, unknown keys rejected.

A user config is deep-merged over the scenario's defaults and then validated
(strictly: any unrecognised key fails).  Fixed seed plus fixed config yields
bit-identical generated data and byte-identical results.csv.
"""

from __future__ import annotations

import copy
import json
import math
from pathlib import Path

import jsonschema

__all__ = ["ConfigError", "load_config", "scenario_defaults", "scenario_names"]


class ConfigError(ValueError):
    """Invalid or unknown configuration."""


_NUM = {"type": "number"}
_INT = {"type": "integer"}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["scenario", "seed", "grid", "lp", "params", "time", "output"],
    "properties": {
        "scenario": {"type": "string"},
        "seed": _INT,
        "workers": _INT,
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "required": ["dim", "n", "half_length_over_pi"],
            "properties": {"dim": _INT, "n": _INT, "half_length_over_pi": _NUM},
        },
        "lp": {
            "type": "object",
            "additionalProperties": False,
            "required": ["j0", "p"],
            "properties": {"j0": _INT, "p": _NUM, "eps": _NUM},
        },
        "params": {
            "type": "object",
            "additionalProperties": False,
            "required": ["mu", "lambda", "pressure"],
            "properties": {
                "mu": _NUM,
                "lambda": _NUM,
                "pressure": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["law"],
                    "properties": {
                        "law": {"type": "string", "enum": ["gamma", "affine"]},
                        "gamma": _NUM,
                    },
                },
            },
        },
        "data": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "amplitude": _NUM,
                "sigma": _NUM,
                "kappa": {"type": "array", "items": _NUM},
                "kappa_u": {"type": "array", "items": _NUM},
                "k_flat": _NUM,
                "high_component": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {"amplitude": _NUM, "sigma": _NUM, "kappa": {"type": "array", "items": _NUM}},
                },
            },
        },
        "time": {
            "type": "object",
            "additionalProperties": False,
            "required": ["horizon", "dt"],
            "properties": {"horizon": _NUM, "dt": _NUM, "sample_stride": _INT},
        },
        "fit": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"window": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}},
        },
        "picard": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"n_max": _INT, "tol": _NUM, "norm_stride": _INT},
        },
        "run": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "resolutions": {"type": "array", "items": _INT},
                "n_problems": _INT,
                "n_fields": _INT,
                "amplitudes": {"type": "array", "items": _NUM},
                "nonlinear": {"type": "boolean"},
                "nonlinear_amplitude": _NUM,
                "nonlinear_dt": _NUM,
                "axes": {"type": ["array", "null"], "items": _INT},
                "j0_sweep": {"type": "array", "items": _INT},
                "dim3": {"type": "object", "additionalProperties": False, "properties": {
                    "n": _INT, "half_length_over_pi": _NUM, "dt": _NUM, "sigma": _NUM}},
            },
        },
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "partition": _NUM,
                "orthogonality": _NUM,
                "reconstruction": _NUM,
                "bony": _NUM,
                "projection": _NUM,
                "bernstein_spread": _NUM,
                "constant_spread_across_j": _NUM,
                "constant_spread_across_grids": _NUM,
                "estimate_spread": _NUM,
                "decay_exponent": _NUM,
                "decay_target": _NUM,
                "decay_exponent_nonlinear": _NUM,
                "r2_min": _NUM,
                "picard_ratio": _NUM,
                "picard_terminal": _NUM,
                "picard_vs_direct": _NUM,
                "consistency": _NUM,
                "residual": _NUM,
                "stabilization": _NUM,
                "amplitude_agreement": _NUM,
                "runtime_seconds": _NUM,
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"dir": {"type": ["string", "null"]}, "checkpoints": {"type": "boolean"}},
        },
    },
}

_COMMON = {
    "seed": 42,
    "workers": 1,
    "lp": {"j0": 0, "p": 2.0, "eps": 0.25},
    "params": {"mu": 0.4, "lambda": 0.2, "pressure": {"law": "affine", "gamma": 1.4}},
    "data": {"amplitude": 0.01, "sigma": 6.0, "kappa": [0.25, 0.2, 0.15], "kappa_u": [0.2, -0.3, 0.1], "k_flat": 0.7},
    "time": {"horizon": 1.0, "dt": 1e-3, "sample_stride": 1},
    "fit": {"window": [10.0, 100.0]},
    "picard": {"n_max": 15, "tol": 1e-6, "norm_stride": 2},
    "run": {},
    "tolerances": {},
    "output": {"dir": None, "checkpoints": False},
}

_DEFAULTS: dict[str, dict] = {
    "lp-verify": {
        "grid": {"dim": 2, "n": 64, "half_length_over_pi": 2.0},
        "run": {"n_fields": 8},
        "tolerances": {
            "partition": 1e-10,
            "orthogonality": 1e-12,
            "reconstruction": 1e-10,
            "bony": 1e-10,
            "projection": 1e-12,
            "bernstein_spread": 10.0,
            "runtime_seconds": 30.0,
        },
    },
    "operator-verify": {
        "grid": {"dim": 2, "n": 32, "half_length_over_pi": 2.0},
        "run": {"resolutions": [32, 64, 128], "n_fields": 200},
        "tolerances": {
            "constant_spread_across_j": 3.0,
            "constant_spread_across_grids": 0.2,
            "runtime_seconds": 300.0,
        },
    },
    "linear-estimates": {
        "grid": {"dim": 2, "n": 32, "half_length_over_pi": 2.0},
        "time": {"horizon": 1.0, "dt": 0.01, "sample_stride": 2},
        "run": {"resolutions": [32, 64, 128], "n_problems": 20, "j0_sweep": [-1, 0, 1]},
        "tolerances": {"estimate_spread": 0.2, "runtime_seconds": 600.0},
    },
    "linear-decay": {
        "grid": {"dim": 3, "n": 64, "half_length_over_pi": 32.0},
        "lp": {"j0": -1, "p": 2.0, "eps": 0.25},
        "params": {"mu": 0.5, "lambda": 0.0, "pressure": {"law": "affine", "gamma": 1.4}},
        "time": {"horizon": 100.0, "dt": 0.5, "sample_stride": 1},
        "run": {"nonlinear": True, "nonlinear_amplitude": 2e-3, "nonlinear_dt": 0.5},
        "tolerances": {
            "decay_target": -1.5,
            "decay_exponent": 0.15,
            "decay_exponent_nonlinear": 0.25,
            "r2_min": 0.99,
            "runtime_seconds": 900.0,
        },
    },
    "local-existence": {
        "grid": {"dim": 2, "n": 256, "half_length_over_pi": 16.0},
        "data": {
            "amplitude": 0.01,
            "sigma": 6.0,
            "kappa": [0.25, 0.2],
            "kappa_u": [0.2, -0.3],
            "high_component": {"amplitude": 0.002, "sigma": 3.0, "kappa": [3.0, 0.5]},
        },
        "time": {"horizon": 0.2, "dt": 2e-3, "sample_stride": 2},
        "picard": {"n_max": 15, "tol": 1e-6, "norm_stride": 2},
        "tolerances": {
            "picard_ratio": 0.9,
            "picard_terminal": 1e-6,
            "picard_vs_direct": 1e-4,
            "runtime_seconds": 600.0,
        },
    },
    "global-bounds": {
        "grid": {"dim": 3, "n": 64, "half_length_over_pi": 16.0},
        "lp": {"j0": -1, "p": 2.0, "eps": 0.25},
        # carrier well above the box scale: mass at slow wavenumbers (decay
        # time beyond the horizon) is Gaussian-suppressed, so the integral
        # norms saturate inside T
        "data": {"amplitude": 0.01, "sigma": 6.0, "kappa": [0.45, 0.4, 0.4], "kappa_u": [0.4, -0.45, 0.35]},
        "time": {"horizon": 50.0, "dt": 0.25, "sample_stride": 2},
        "run": {"amplitudes": [0.01, 0.005], "axes": None},
        "tolerances": {"stabilization": 0.01, "amplitude_agreement": 0.3, "runtime_seconds": 1200.0},
        "output": {"dir": None, "checkpoints": True},
    },
    "weighted-bounds": {
        "grid": {"dim": 2, "n": 64, "half_length_over_pi": 16.0},
        "time": {"horizon": 1.0, "dt": 1e-3, "sample_stride": 10},
        "run": {"axes": None, "dim3": {"n": 64, "half_length_over_pi": 16.0, "dt": 5e-3, "sigma": 6.0}},
        "tolerances": {"consistency": 1e-4, "residual": 1e-3, "runtime_seconds": 600.0},
    },
}


def scenario_names() -> list[str]:
    return sorted(_DEFAULTS)


def scenario_defaults(scenario: str) -> dict:
    if scenario not in _DEFAULTS:
        raise ConfigError(f"unknown scenario {scenario!r}; choose from {scenario_names()}")
    cfg = copy.deepcopy(_COMMON)
    _deep_merge(cfg, copy.deepcopy(_DEFAULTS[scenario]))
    cfg["scenario"] = scenario
    return cfg


def _deep_merge(base: dict, override: dict) -> dict:
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(base.get(key), dict):
            _deep_merge(base[key], val)
        else:
            base[key] = val
    return base


def load_config(
    scenario: str,
    path: str | Path | None = None,
    overrides: dict | None = None,
) -> dict:
    """Merge defaults <- file <- overrides, then validate strictly."""
    cfg = scenario_defaults(scenario)
    if path is not None:
        try:
            user = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config root must be a JSON object")
        if "scenario" in user and user["scenario"] != scenario:
            raise ConfigError(
                f"config is for scenario {user['scenario']!r}, requested {scenario!r}"
            )
        _deep_merge(cfg, user)
        cfg["scenario"] = scenario
    if overrides:
        _deep_merge(cfg, overrides)
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid config: {exc.message} (at {'/'.join(map(str, exc.path))})") from exc
    if cfg["scenario"] not in _DEFAULTS:
        raise ConfigError(f"unknown scenario {cfg['scenario']!r}")
    for key in ("partition", "orthogonality"):
        tol = cfg["tolerances"].get(key)
        if tol is not None and tol <= 0:
            raise ConfigError(f"tolerance {key} must be positive")
    if not math.isfinite(cfg["grid"]["half_length_over_pi"]) or cfg["grid"]["half_length_over_pi"] <= 0:
        raise ConfigError("grid.half_length_over_pi must be positive")
    return cfg
