"""Experiment configuration: YAML or JSON with units spelled out in every key.

Human units (dBm, per km^2, degrees) are converted to SI here and nowhere else.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from .channel import NetworkParams, Regime
from .errors import ConfigError, SapError
from .geometry import BlockageModel
from .op_analysis import DEFAULT_NUMERICS, NumericsConfig

PER_KM2 = 1e-6


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) / 1000.0


def watt_to_dbm(w: float) -> float:
    return 10.0 * math.log10(w * 1000.0)


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_count = {"type": "integer", "minimum": 1}

_sweep = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "values": {"type": "array", "items": _pos},
        "start": _pos,
        "stop": _pos,
        "num": {"type": "integer", "minimum": 0},
        "spacing": {"enum": ["log", "linear"]},
    },
}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["network"],
    "properties": {
        "name": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "network": {
            "type": "object",
            "additionalProperties": False,
            "required": ["primary_density_per_km2", "primary_power_dbm", "secondary_power_dbm",
                         "path_loss_exponent", "pair_distance_m"],
            "properties": {
                "regime": {"enum": [r.value for r in Regime]},
                "primary_density_per_km2": _nonneg,
                "secondary_density_per_km2": _nonneg,
                "primary_power_dbm": _num,
                "secondary_power_dbm": _num,
                "path_loss_exponent": {"type": "number", "exclusiveMinimum": 2},
                "pair_distance_m": _pos,
                "beamwidth_deg": {"type": "number", "exclusiveMinimum": 0, "maximum": 360},
                "primary_target_linear": _pos,
                "outage_cap": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "axis_length_m": _pos,
                "blockage": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["length_m", "width_m"],
                    "properties": {
                        "density_per_km2": _nonneg,
                        "factor_per_m": _nonneg,
                        "length_m": _pos,
                        "width_m": _pos,
                    },
                    "oneOf": [{"required": ["density_per_km2"]}, {"required": ["factor_per_m"]}],
                },
            },
        },
        "beta": _sweep,
        "empty_ball_radius_m": _pos,
        "simulation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_samples": {"type": "integer", "minimum": 0},
                "bins": _count,
                "min_bin_count": _count,
                "sensing": {"enum": ["averaged", "instantaneous"]},
                "n_topologies": {"type": "integer", "minimum": 0},
                "slots_per_topology": _count,
                "half_width_m": _pos,
                "probes_per_primary": _count,
                "primary_rx_mode": {"enum": ["fixed", "nearest"]},
                "macs": {"type": "array", "items": {"type": "string"}},
                "theta_grid": _sweep,
            },
        },
        "fit_l": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "xi_per_m": {"type": "array", "items": _nonneg, "minItems": 1},
                "shapes_m": {"type": "array",
                             "items": {"type": "array", "items": _pos, "minItems": 2,
                                       "maxItems": 2}},
                "axis_grid_m": _sweep,
                "weighting": {"enum": ["mass", "uniform"]},
            },
        },
        "census": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"beamwidths_deg": {"type": "array", "items": _pos, "minItems": 1},
                           "distance_bins_m": {"type": "array", "items": _nonneg}},
        },
        "validate": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "criteria": {"type": "array", "items": {"type": "integer", "minimum": 1,
                                                        "maximum": 10}},
                "sample_scale": _pos,
            },
        },
        "numerics": {
            "type": "object",
            "additionalProperties": False,
            "properties": {f.name: (_count if f.type in ("int", int) else _pos)
                           for f in dataclasses.fields(NumericsConfig)},
        },
    },
}


def sweep_values(block: dict | None, default=None) -> np.ndarray:
    """Expand a sweep block into an array; ``default`` is used when absent."""
    if block is None:
        return np.asarray(default if default is not None else [], dtype=float)
    if "values" in block:
        return np.asarray(block["values"], dtype=float)
    missing = [k for k in ("start", "stop", "num") if k not in block]
    if missing:
        raise ConfigError(f"sweep needs {missing} or an explicit list", path="")
    if block.get("spacing", "log") == "log":
        return np.geomspace(block["start"], block["stop"], block["num"])
    return np.linspace(block["start"], block["stop"], block["num"])


@dataclass(frozen=True)
class ExperimentConfig:
    params: NetworkParams
    raw: dict
    seed: int = 0
    beta: np.ndarray = field(default_factory=lambda: np.zeros(0))
    simulation: dict = field(default_factory=dict)
    numerics: NumericsConfig = DEFAULT_NUMERICS
    source: str = "<dict>"

    def section(self, name: str) -> dict:
        return dict(self.raw.get(name, {}))


def params_from_network(net: dict) -> NetworkParams:
    regime = Regime(net.get("regime", "below6"))
    blk = None
    b = net.get("blockage")
    if b is not None:
        if "factor_per_m" in b:
            blk = BlockageModel.from_xi(b["factor_per_m"], b["length_m"], b["width_m"])
        else:
            blk = BlockageModel(b["density_per_km2"] * PER_KM2, b["length_m"], b["width_m"])
    kw = {}
    if "primary_target_linear" in net:
        kw["gamma"] = float(net["primary_target_linear"])
    if "outage_cap" in net:
        kw["tau"] = float(net["outage_cap"])
    return NetworkParams(
        lambda1=net["primary_density_per_km2"] * PER_KM2,
        lambda2=net.get("secondary_density_per_km2", 0.0) * PER_KM2,
        p1=dbm_to_watt(net["primary_power_dbm"]),
        p2=dbm_to_watt(net["secondary_power_dbm"]),
        alpha=float(net["path_loss_exponent"]),
        d=float(net["pair_distance_m"]),
        omega=math.radians(net.get("beamwidth_deg", 360.0)),
        regime=regime,
        blockage=blk,
        axis_length=net.get("axis_length_m"),
        **kw,
    )


def network_to_dict(params: NetworkParams) -> dict:
    """Resolved parameters in SI units, for output metadata."""
    out = {
        "regime": params.regime.value,
        "lambda1_per_m2": params.lambda1,
        "lambda2_per_m2": params.lambda2,
        "p1_w": params.p1,
        "p2_w": params.p2,
        "alpha": params.alpha,
        "d_m": params.d,
        "omega_rad": params.omega,
        "gamma": params.gamma,
        "tau": params.tau,
        "axis_length_m": params.L if math.isfinite(params.L) else None,
        "r_los_m": params.r_los if math.isfinite(params.r_los) else None,
    }
    if params.blockage is not None:
        b = params.blockage
        out["blockage"] = {"lambda_b_per_m2": b.lambda_b, "d_len_m": b.d_len,
                           "d_wid_m": b.d_wid, "xi_per_m": b.xi}
    return out


def from_dict(raw: dict, source: str = "<dict>") -> ExperimentConfig:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        path = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"{source}: {path}: {e.message}", path=path)
    try:
        params = params_from_network(raw["network"])
        beta = sweep_values(raw.get("beta"))
    except ConfigError as exc:
        raise ConfigError(f"{source}: beta: {exc}", path="beta") from exc
    except SapError as exc:
        raise ConfigError(f"{source}: network: {exc}", path="network") from exc
    if "beta" in raw and len(beta) == 0:
        raise ConfigError(f"{source}: beta: empty sweep range", path="beta")
    num = dataclasses.replace(DEFAULT_NUMERICS, **raw.get("numerics", {}))
    return ExperimentConfig(params, raw, int(raw.get("seed", 0)), beta,
                            dict(raw.get("simulation", {})), num, source)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}", path="") from exc
    try:
        raw = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: not valid YAML/JSON: {exc}", path="") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping", path="<root>")
    return from_dict(raw, str(path))
