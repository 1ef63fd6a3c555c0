"""JSON run configuration: schema, loading and object construction.

A configuration has the sections ``plant``, ``sta``, ``domain``, ``design``,
``scenario`` and ``output``; unknown keys are rejected everywhere.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass

import jsonschema
import numpy as np

from .bounds import DEFAULT_SAFETY, SamplingDomain
from .design import DesignOptions
from .errors import ContractError
from .lyapunov import LyapCert
from .plants import (AcademicModel, AcademicParams, Disturbance, Reference, RobotModel,
                     RobotParams)
from .sta import StaParams


class ConfigError(ContractError):
    """Malformed or schema-violating configuration."""


_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_vec3 = {"type": "array", "items": _num, "minItems": 3, "maxItems": 3}
_mat3 = {"type": "array", "items": _vec3, "minItems": 3, "maxItems": 3}
_scalar_or_mat3 = {"oneOf": [_pos, _mat3]}
_numarr = {"type": "array", "items": _num, "minItems": 1}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


_robot_params = _obj({
    **{k: _pos for k in ("m1", "m2", "J1", "J2", "J3", "Jm", "L", "l1", "l2", "r",
                         "ka", "ra", "re", "kan", "ran", "ren")},
    "fv": {"oneOf": [_pos, _vec3]},
    "fd": {"oneOf": [_pos, _vec3]},
    "Mn": _scalar_or_mat3,
})

SCHEMA = _obj({
    "plant": {"oneOf": [
        _obj({
            "type": {"const": "robot"},
            "params": _robot_params,
            "reference": _obj({"q0": _vec3, "velocity": _vec3, "Theta": _scalar_or_mat3}),
            "disturbance": _obj({"amplitude": {"oneOf": [_num, _vec3]}, "omega": _num}),
            "q0": _vec3,
            "q_dot0": _vec3,
        }, required=["type"]),
        _obj({
            "type": {"const": "academic"},
            "params": _obj({"g_bar": {"type": "number", "minimum": 0},
                            "omega": _num, "phase": _num}),
            "x0": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
        }, required=["type"]),
    ]},
    "sta": _obj({"alpha": _pos, "beta": _pos, "b": _pos,
                 "p": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.5},
                 "k1": {"type": "number", "minimum": 0},
                 "k2": {"type": "number", "minimum": 0}}),
    "domain": _obj({
        "lower": _numarr, "upper": _numarr,
        "counts": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1},
        "t_range": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
        "t_count": {"type": "integer", "minimum": 2},
        "shell_norms": {"type": "array", "items": _pos},
        "shell_directions": {"type": "integer", "minimum": 0},
        "random_samples": {"type": "integer", "minimum": 0},
        "seed": {"type": "integer", "minimum": 0},
        "safety": {"type": "number", "minimum": 1},
    }, required=["lower", "upper", "counts"]),
    "design": _obj({
        "p2_count": {"type": "integer", "minimum": 1},
        "p2_min": _pos, "p2_start_free": _pos,
        "p1_min": _pos, "p1_max": _pos,
        "p1_count": {"type": "integer", "minimum": 2},
        "k1_cap": _pos,
    }),
    "scenario": _obj({
        "dt": _pos,
        "horizon": _pos,
        "v0": _numarr,
        "cert": _obj({"p1": _pos, "p2": _pos}, required=["p1", "p2"]),
        "eps": _pos,
        "hold": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "divergence_limit": _pos,
    }),
    "output": _obj({"dir": {"type": "string"}, "constants": {"type": "string"},
                    "design": {"type": "string"}, "trace": {"type": "string"},
                    "summary": {"type": "string"}, "report": {"type": "string"}}),
}, required=["plant", "sta"])


def validate(cfg: dict) -> dict:
    """Raise :class:`ConfigError` (with a JSON path) unless ``cfg`` fits the schema."""
    v = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(v.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        if e.context:
            # oneOf: report the branch error closest to the offending key
            e = max(e.context, key=lambda c: len(c.absolute_path))
            where = "/".join(str(p) for p in e.absolute_path) or where
        raise ConfigError(f"config error at {where}: {e.message}")
    return cfg


def load_text(text: str, source: str = "<config>") -> dict:
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{source}:{e.lineno}:{e.colno}: invalid JSON: {e.msg}") from None
    return validate(cfg)


def load(path) -> dict:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    return load_text(text, str(path))


def set_key(cfg: dict, dotted: str, value) -> dict:
    """Copy of ``cfg`` with ``a.b.c`` set to ``value`` (re-validated)."""
    out = copy.deepcopy(cfg)
    node = out
    parts = dotted.split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot set {dotted}: {p} is not a section")
    node[parts[-1]] = value
    return validate(out)


@dataclass
class Built:
    """Objects derived from a validated configuration."""

    model: object
    sta: StaParams
    domain: SamplingDomain | None
    safety: float
    design_options: DesignOptions
    scenario: dict
    cert: LyapCert | None
    output: dict


def _wrap(fn, *args, what: str):
    try:
        return fn(*args)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid {what}: {e}") from None


def build(cfg: dict, seed: int | None = None, safety: float | None = None) -> Built:
    """Instantiate model, controller constants and options.

    Raises:
        ConfigError: on values the schema cannot catch (for instance a
            non-definite ``Mn`` or domain boxes of the wrong dimension).
        CertificateError: if ``scenario.cert`` violates ``p1 p2 > 1``.
    """
    pl = cfg["plant"]
    if pl["type"] == "robot":
        params = _wrap(RobotParams.from_dict, pl.get("params", {}), what="plant.params")
        ref = _wrap(Reference.from_dict, pl.get("reference", {}), what="plant.reference")
        dist = _wrap(Disturbance.from_dict, pl.get("disturbance", {}), what="plant.disturbance")
        model = RobotModel(params, ref, dist,
                           q0=tuple(pl.get("q0", (0.0, 0.0, 0.0))),
                           q_dot0=tuple(pl.get("q_dot0", (0.0, 0.0, 0.0))))
    else:
        params = _wrap(AcademicParams.from_dict, pl.get("params", {}), what="plant.params")
        model = AcademicModel(params, x0=tuple(pl.get("x0", (1.0, -0.5))))
    sta = _wrap(lambda d: StaParams(**d), cfg["sta"], what="sta")

    dom = None
    dsec = dict(cfg.get("domain", {}))
    cfg_safety = dsec.pop("safety", DEFAULT_SAFETY)
    if dsec:
        if seed is not None:
            dsec["seed"] = int(seed)
        dom = _wrap(SamplingDomain.from_dict, dsec, what="domain")
    sf = float(cfg_safety if safety is None else safety)
    if not sf >= 1:
        raise ConfigError("safety factor must be >= 1")

    sc = dict(cfg.get("scenario", {}))
    cert = LyapCert.from_dict(sc.pop("cert")) if "cert" in sc else None
    if "v0" in sc and len(sc["v0"]) != model.n:
        raise ConfigError(f"scenario.v0 needs {model.n} entries")
    return Built(model, sta, dom, sf,
                 _wrap(DesignOptions.from_dict, cfg.get("design", {}), what="design"),
                 sc, cert, dict(cfg.get("output", {})))


def jsonable(x):
    """Convert numpy scalars/arrays inside ``x`` to plain JSON types."""
    if isinstance(x, dict):
        return {k: jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    return x
