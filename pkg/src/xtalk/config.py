"""Experiment configuration: JSON schema, validation and object construction."""
from __future__ import annotations

import copy
import json
from pathlib import Path

import jsonschema

from .model import DeviceModel, NoiseModel, validate_device

SCHEMA_VERSION = 1
EXPERIMENTS = ("check", "dd_compare", "qns_demo", "cumulant_validate")


class ConfigError(ValueError):
    """Schema or semantic violation; ``path`` names the offending field."""

    def __init__(self, path, message):
        self.path = path
        self.message = message
        super().__init__(f"{path or '<root>'}: {message}")


_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_int1 = {"type": "integer", "minimum": 1}
_shape = {"enum": ["square", "instantaneous"]}

_spectrum = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["white", "lorentzian", "one_over_f", "gaussian_band", "tabulated"]},
        "s0": _nonneg, "omega_c": _pos, "a": _nonneg, "omega_min": _pos, "omega_max": _pos,
        "omega_0": _nonneg, "sigma": _pos,
        "grid": {"type": "array", "items": _nonneg}, "values": {"type": "array", "items": _nonneg},
    },
    "additionalProperties": False,
}

_noise_entry = {
    "type": "object",
    "required": ["i", "spectrum"],
    "properties": {
        "i": {"type": "integer", "minimum": 0}, "j": {"type": "integer", "minimum": 0},
        "mu": {"enum": ["x", "y", "z"]}, "nu": {"enum": ["x", "y", "z"]},
        "spectrum": _spectrum,
    },
    "additionalProperties": False,
}

_device = {
    "type": "object",
    "required": ["n_qubits"],
    "properties": {
        "n_qubits": _int1,
        "edges": {"type": "array", "items": {"type": "array", "prefixItems": [
            {"type": "integer", "minimum": 0}, {"type": "integer", "minimum": 0}, _num],
            "minItems": 3, "maxItems": 3}},
        "chain_J": _num,
        "labels": {"type": "array", "items": {"type": "string"}},
    },
    "additionalProperties": False,
}

_simulation = {
    "type": "object",
    "properties": {
        "n_trajectories": _int1, "n_shots": _int1, "dt": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "n_taps": _int1, "antithetic": {"type": "boolean"},
        "readout_error": {"type": "number", "minimum": 0, "exclusiveMaximum": 0.5},
    },
    "additionalProperties": False,
}

_analysis = {
    "type": "object",
    "properties": {"n_resamples": {"type": "integer", "minimum": 100},
                   "fit_k_min": {"type": "number", "minimum": 0, "exclusiveMaximum": 100}},
    "additionalProperties": False,
}

_protocols = {
    "check": {
        "type": "object",
        "required": ["sequence"],
        "properties": {
            "sequence": {"enum": ["FREE", "XY4", "XY4_PRIME", "CR-XY4", "FTTPS", "CR-FTTPS"]},
            "tau": _nonneg, "delta": _nonneg, "repetitions": _int1, "pulse_shape": _shape,
            "ell": {"type": "integer", "minimum": 2}, "kappa": _int1, "t_gate": _pos,
            "tolerance": _pos, "floor": _pos,
        },
        "additionalProperties": False,
    },
    "cumulant_validate": {
        "type": "object",
        "properties": {
            "sequence": {"enum": ["FREE", "XY4", "CR-XY4"]},
            "tau": _nonneg, "delta": _nonneg, "repetitions": _int1, "pulse_shape": _shape,
            "azimuths": {"type": "array", "items": _num},
            "scales": {"type": "array", "items": _pos, "minItems": 2},
            "max_discrepancy": _pos, "min_slope": _num,
        },
        "additionalProperties": False,
    },
    "dd_compare": {
        "type": "object",
        "properties": {
            "protocols": {"type": "array", "minItems": 1,
                          "items": {"enum": ["FREE", "XY4", "CR-XY4"]}},
            "reference": {"enum": ["FREE", "XY4", "CR-XY4"]},
            "candidate": {"enum": ["FREE", "XY4", "CR-XY4"]},
            "tau": _nonneg, "delta": _nonneg, "max_cycles": _int1, "cycle_stride": _int1,
            "pulse_shape": _shape,
            "states": {"enum": ["xy_product", "bell_pairs", "w"]},
            "n_states": _int1, "replicates": _int1,
            "bell_pairs": {"type": "array", "items": {"type": "array", "items": {"type": "integer"},
                                                      "minItems": 2, "maxItems": 2}},
            "w_qubits": {"type": "array", "items": {"type": "integer"}, "minItems": 3, "maxItems": 3},
            "fit": {"type": "boolean"},
            "j_scales": {"type": "array", "items": _nonneg},
        },
        "additionalProperties": False,
    },
    "qns_demo": {
        "type": "object",
        "properties": {
            "protocols": {"type": "array", "minItems": 1,
                          "items": {"enum": ["FTTPS", "CC-FTTPS", "CR-FTTPS"]}},
            "ell": {"type": "integer", "minimum": 2}, "t_gate": _pos, "pulse_shape": _shape,
            "replicates": _int1, "constraint": {"enum": ["none", "nonneg"]}, "ridge": _nonneg,
            "calibrated_edges": {"type": "array", "items": {"type": "array", "prefixItems": [
                {"type": "integer"}, {"type": "integer"}, _num], "minItems": 3, "maxItems": 3}},
            "j_zero_control": {"type": "boolean"},
        },
        "additionalProperties": False,
    },
}


def schema_for(experiment):
    return {
        "type": "object",
        "required": ["schema_version", "experiment", "device"],
        "properties": {
            "schema_version": {"const": SCHEMA_VERSION},
            "experiment": {"enum": list(EXPERIMENTS)},
            "name": {"type": "string"},
            "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
            "device": _device,
            "noise": {"type": "array", "items": _noise_entry},
            "protocol": _protocols.get(experiment, {"type": "object"}),
            "simulation": _simulation,
            "analysis": _analysis,
        },
        "additionalProperties": False,
    }


def _path(err):
    parts = [str(p) for p in err.absolute_path]
    if err.validator == "required":
        missing = err.message.split("'")[1] if "'" in err.message else ""
        parts.append(missing)
    elif err.validator == "additionalProperties":
        extra = err.message.split("'")[1] if "'" in err.message else ""
        parts.append(extra)
    return ".".join(p for p in parts if p)


def validate(data):
    """Validate a config mapping; raises ConfigError naming the first bad field."""
    if not isinstance(data, dict):
        raise ConfigError("", "config must be a JSON object")
    experiment = data.get("experiment")
    validator = jsonschema.Draft202012Validator(schema_for(experiment))
    errors = sorted(validator.iter_errors(data), key=lambda e: (list(e.absolute_path), e.message))
    if errors:
        err = errors[0]
        raise ConfigError(_path(err), err.message)
    try:
        device_from(data)
        noise_from(data)
    except ConfigError:
        raise
    except (ValueError, KeyError) as exc:
        raise ConfigError("device" if "device" in str(exc).lower() else "noise", str(exc)) from exc
    return data


def load(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("", f"cannot read config: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON: {exc}") from exc
    return validate(data)


def device_from(data) -> DeviceModel:
    d = data["device"]
    n = d["n_qubits"]
    if "edges" in d and "chain_J" in d:
        raise ConfigError("device", "give either edges or chain_J, not both")
    if "chain_J" in d:
        dev = DeviceModel.chain(n, d["chain_J"])
    else:
        dev = DeviceModel(n, tuple(tuple(e) for e in d.get("edges", [])), d.get("labels"))
    try:
        validate_device(dev)
    except ValueError as exc:
        raise ConfigError("device.edges", str(exc)) from exc
    return dev


def noise_from(data) -> NoiseModel:
    rows = data.get("noise", [])
    n = data["device"]["n_qubits"]
    for k, row in enumerate(rows):
        for key in ("i", "j"):
            if key in row and row[key] >= n:
                raise ConfigError(f"noise.{k}.{key}", f"qubit index {row[key]} out of range")
    try:
        return NoiseModel.from_dict(rows)
    except (ValueError, TypeError) as exc:
        raise ConfigError("noise", str(exc)) from exc


def with_defaults(data, defaults):
    """Deep-merge ``data`` over ``defaults`` (dicts only)."""
    out = copy.deepcopy(defaults)
    for k, v in data.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = with_defaults(v, out[k])
        else:
            out[k] = copy.deepcopy(v)
    return out
