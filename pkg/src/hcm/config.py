"""JSON run configuration: strict schema, loading and serialisation.

A configuration document looks like::

    {
      "version": 1,
      "n_clones": 2,
      "t_s": 0.6,
      "alpha_in": {"re": 1.115, "im": 1.095},
      "filter": {"g_prime": "calibrate", "beta": 3.0, "cutoff_geometry": "radial"},
      "eta_dh": 0.9, "eta_input": 0.97, "eta_verify": 0.985,
      "port_transmissions": null,
      "shots": 1000000,
      "seed": 0
    }

Only ``n_clones``, ``t_s`` and ``alpha_in`` are required. Unknown keys are
rejected anywhere in the document.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import jsonschema

from .engine import HcmConfig
from .errors import ConfigError, InvalidArgument, RegimeError

__all__ = ["SCHEMA_VERSION", "CONFIG_SCHEMA", "config_from_dict", "config_to_dict", "load_config"]

SCHEMA_VERSION = 1

_EFF = {"type": "number", "exclusiveMinimum": 0, "maximum": 1}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["n_clones", "t_s", "alpha_in"],
    "properties": {
        "version": {"const": SCHEMA_VERSION},
        "n_clones": {"type": "integer", "minimum": 1},
        "t_s": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "alpha_in": {
            "type": "object",
            "additionalProperties": False,
            "required": ["re", "im"],
            "properties": {"re": {"type": "number"}, "im": {"type": "number"}},
        },
        "filter": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "g_prime": {"oneOf": [{"const": "calibrate"},
                                      {"type": "number", "minimum": 1}]},
                "beta": {"type": "number", "exclusiveMinimum": 0},
                "cutoff_geometry": {"enum": ["radial", "rect"]},
            },
        },
        "eta_dh": _EFF,
        "eta_input": _EFF,
        "eta_verify": _EFF,
        "port_transmissions": {
            "oneOf": [{"type": "null"},
                      {"type": "array", "minItems": 1, "items": {"type": "number", "minimum": 0}}],
        },
        "shots": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
    },
}

_VALIDATOR = jsonschema.Draft202012Validator(CONFIG_SCHEMA)


def _path(err) -> str:
    parts = [str(p) for p in err.absolute_path]
    if err.validator == "required":
        missing = err.message.split("'")[1]
        parts.append(missing)
    elif err.validator == "additionalProperties":
        extra = [p for p in err.instance if p not in err.schema.get("properties", {})]
        parts.append(extra[0] if extra else "?")
    return ".".join(parts) or "<root>"


def _finite_numbers(obj, path=""):
    if isinstance(obj, float) and not math.isfinite(obj):
        raise ConfigError(path or "<root>", "non-finite number")
    if isinstance(obj, dict):
        for k, v in obj.items():
            _finite_numbers(v, f"{path}.{k}" if path else k)
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            _finite_numbers(v, f"{path}.{i}")


def config_from_dict(doc: dict) -> HcmConfig:
    """Validate a configuration document and build an :class:`HcmConfig`.

    Raises :class:`ConfigError` carrying the dotted path of the first
    offending field.
    """
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "configuration must be a JSON object")
    _finite_numbers(doc)
    errors = sorted(_VALIDATOR.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ConfigError(_path(err), err.message)
    filt = doc.get("filter", {})
    kwargs = {
        "n_clones": int(doc["n_clones"]),
        "t_s": float(doc["t_s"]),
        "alpha_in": complex(doc["alpha_in"]["re"], doc["alpha_in"]["im"]),
        "g_prime": filt.get("g_prime", "calibrate"),
        "cutoff_geometry": filt.get("cutoff_geometry", "radial"),
    }
    if "beta" in filt:
        kwargs["beta"] = float(filt["beta"])
    for key in ("eta_dh", "eta_input", "eta_verify"):
        if key in doc:
            kwargs[key] = float(doc[key])
    for key in ("shots", "seed"):
        if key in doc:
            kwargs[key] = int(doc[key])
    if doc.get("port_transmissions") is not None:
        kwargs["port_transmissions"] = tuple(doc["port_transmissions"])
    if isinstance(kwargs["g_prime"], (int, float)):
        kwargs["g_prime"] = float(kwargs["g_prime"])
    try:
        return HcmConfig(**kwargs)
    except RegimeError as exc:
        raise ConfigError("t_s", str(exc)) from exc
    except InvalidArgument as exc:
        msg = str(exc)
        field = next((k for k in ("port_transmissions", "t_s", "n_clones") if k in msg), "<root>")
        raise ConfigError(field, msg) from exc


def config_to_dict(cfg: HcmConfig) -> dict:
    """Inverse of :func:`config_from_dict` (explicit filter overrides are not representable)."""
    return {
        "version": SCHEMA_VERSION,
        "n_clones": cfg.n_clones,
        "t_s": cfg.t_s,
        "alpha_in": {"re": cfg.alpha_in.real, "im": cfg.alpha_in.imag},
        "filter": {"g_prime": cfg.g_prime, "beta": cfg.beta,
                   "cutoff_geometry": cfg.cutoff_geometry},
        "eta_dh": cfg.eta_dh,
        "eta_input": cfg.eta_input,
        "eta_verify": cfg.eta_verify,
        "port_transmissions": (list(cfg.port_transmissions)
                               if cfg.port_transmissions is not None else None),
        "shots": cfg.shots,
        "seed": cfg.seed,
    }


def load_config(path) -> HcmConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return config_from_dict(doc)
