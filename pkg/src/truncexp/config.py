"""Experiment configuration: JSON schema, loading, and hashing."""

import copy
import hashlib
import json
from pathlib import Path

import jsonschema
import numpy as np

from .errors import SchemaError

SCHEMA_VERSION = "1.0"

_number = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_posint = {"type": "integer", "minimum": 1}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["family", "domain", "constraints"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"type": "string"},
        "family": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["polynomial", "trigonometric", "mixed"]},
                "degree": {"type": "integer", "minimum": 0},
                "frequencies": {"type": "integer", "minimum": 0},
                "shape": {"type": "array", "items": _posint, "minItems": 3, "maxItems": 3},
                "layout": {"enum": ["graded", "outer"]},
                "include_constant": {"type": "boolean"},
                "shared_slices": {"type": "boolean"},
            },
        },
        "domain": {
            "oneOf": [
                {
                    "type": "object",
                    "required": ["kind", "bounds"],
                    "additionalProperties": False,
                    "properties": {
                        "kind": {"const": "box"},
                        "bounds": {"type": "array", "minItems": 1, "items": {
                            "type": "array", "items": _number, "minItems": 2, "maxItems": 2}},
                    },
                },
                {
                    "type": "object",
                    "required": ["kind", "center", "radius"],
                    "additionalProperties": False,
                    "properties": {
                        "kind": {"const": "ball"},
                        "center": {"type": "array", "items": _number, "minItems": 1},
                        "radius": _pos,
                    },
                },
            ]
        },
        "constraints": {
            "type": "array",
            "minItems": 1,
            "maxItems": 2,
            "items": {
                "type": "object",
                "required": ["norm", "radius"],
                "additionalProperties": False,
                "properties": {"norm": {"enum": ["l11", "nuclear"]}, "radius": _pos},
            },
        },
        "truth": {
            "oneOf": [
                {"type": "array"},
                {"type": "object", "required": ["file"], "additionalProperties": False,
                 "properties": {"file": {"type": "string"}}},
            ]
        },
        "samples": {
            "oneOf": [
                {
                    "type": "object",
                    "required": ["generate"],
                    "additionalProperties": False,
                    "properties": {"generate": {
                        "type": "object",
                        "required": ["n"],
                        "additionalProperties": False,
                        "properties": {
                            "sampler": {"enum": ["grid", "metropolis"]},
                            "n": _posint,
                            "resolution": {"type": "integer", "minimum": 64},
                            "burn_in": {"type": "integer", "minimum": 0},
                            "thinning": _posint,
                            "proposal_scale": _pos,
                            "n_chains": _posint,
                        },
                    }},
                },
                {
                    "type": "object",
                    "required": ["file"],
                    "additionalProperties": False,
                    "properties": {"file": {"type": "string"}},
                },
            ]
        },
        "fit": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "epsilon": _pos,
                "max_iters": {"type": ["integer", "null"], "minimum": 1},
                "step_size": {"oneOf": [_pos, {"type": "null"}]},
                "trace_stride": _posint,
                "stop_tol": _pos,
                "stop_patience": _posint,
                "bounds": {"enum": ["closed_form", "interval"]},
                "check_identifiability": {"type": "boolean"},
                "phi_max": _pos,
                "d": {"type": "array", "items": _pos, "minItems": 1, "maxItems": 2},
            },
        },
        "diagnose": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "checks": {"type": "array", "items": {"enum": [
                    "correlation", "population_correlation", "kl", "sandwich",
                    "concentration", "finite_sample"]}},
                "kl_grid": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {"lo": _number, "hi": _number, "step": _pos},
                },
                "concentration": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {"n": _posint, "trials": _posint, "delta": _pos},
                },
                "alpha": _pos,
                "delta": _pos,
            },
        },
        "sweep": {
            "type": "object",
            "required": ["n"],
            "additionalProperties": False,
            "properties": {
                "n": {"type": "array", "items": _posint, "minItems": 1},
                "alpha": {"type": "array", "items": _pos, "minItems": 1},
                "replications": _posint,
                "workers": _posint,
            },
        },
        "output_dir": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
    },
}


def _path_of(error):
    return "/" + "/".join(str(p) for p in error.absolute_path)


def validate(cfg):
    """Raise :class:`SchemaError` naming the offending field."""
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        err = min(errors, key=lambda e: -len(list(e.absolute_path)))
        raise SchemaError(err.message, _path_of(err))
    k3 = cfg["family"].get("shape", [1, 1, 1])[2]
    if len(cfg["constraints"]) != k3:
        raise SchemaError(f"{len(cfg['constraints'])} constraints for k3={k3}", "/constraints")


def load_config(path, overrides=None):
    """Read, apply ``overrides`` (a dict of dotted keys), resolve files, validate.

    File paths are resolved relative to the config file and must exist.
    """
    path = Path(path)
    try:
        cfg = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise SchemaError(f"config file {path} not found") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}") from exc
    return prepare_config(cfg, base_dir=path.parent, overrides=overrides)


def prepare_config(cfg, base_dir=".", overrides=None):
    cfg = copy.deepcopy(cfg)
    for key, value in (overrides or {}).items():
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    validate(cfg)
    base_dir = Path(base_dir)
    for section in ("samples", "truth"):
        item = cfg.get(section)
        if isinstance(item, dict) and "file" in item:
            f = Path(item["file"])
            f = f if f.is_absolute() else base_dir / f
            if not f.exists():
                raise SchemaError(f"file {item['file']} does not exist", f"/{section}/file")
            item["file"] = str(f.resolve())
    cfg.setdefault("seed", 0)
    cfg.setdefault("output_dir", "out")
    return cfg


def config_hash(cfg):
    """Short SHA-256 of the canonical JSON form.

    ``output_dir`` is left out: where results go does not change them.
    """
    body = {k: v for k, v in cfg.items() if k != "output_dir"}
    blob = json.dumps(body, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def load_truth(cfg, shape):
    """Theta* from the config, or None when absent."""
    item = cfg.get("truth")
    if item is None:
        return None
    if isinstance(item, dict):
        f = Path(item["file"])
        arr = np.load(f) if f.suffix == ".npy" else np.asarray(json.loads(f.read_text()), float)
    else:
        arr = np.asarray(item, dtype=float)
    if arr.size != int(np.prod(shape)):
        raise SchemaError(f"truth has {arr.size} entries, shape {tuple(shape)} needs "
                          f"{int(np.prod(shape))}", "/truth")
    return arr.reshape(shape)
