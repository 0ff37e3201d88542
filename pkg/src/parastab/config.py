"""Run configuration: JSON schema, defaults and conversion to domain objects."""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema

from .nonlinearity import Nonlinearity
from .simulator import AlwaysOn, OpenLoop, ProblemSpec, SimConfig, WaitThenControl
from .sturm_liouville import CoefficientField, Grid

_number = {"type": "number"}
_coeff_list = {"type": "array", "items": _number, "minItems": 1}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "parastab run configuration",
    "type": "object",
    "additionalProperties": False,
    "required": ["problem"],
    "properties": {
        "problem": {
            "type": "object",
            "additionalProperties": False,
            "required": ["q", "delta"],
            "properties": {
                "coefficients": {
                    "oneOf": [
                        {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["constant"],
                            "properties": {
                                "constant": {
                                    "type": "object",
                                    "additionalProperties": False,
                                    "required": ["a", "b"],
                                    "properties": {"a": _number, "b": _number},
                                }
                            },
                        },
                        {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["polynomial"],
                            "properties": {
                                "polynomial": {
                                    "type": "object",
                                    "additionalProperties": False,
                                    "required": ["a", "b"],
                                    "properties": {"a": _coeff_list, "b": _coeff_list},
                                }
                            },
                        },
                    ]
                },
                "q": _number,
                "delta": {"type": "number", "exclusiveMinimum": 0},
                "nonlinearity": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind"],
                    "properties": {
                        "kind": {"enum": ["zero", "burgers", "allen_cahn"]},
                        "lambda": _number,
                    },
                },
            },
        },
        "numerics": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "M": {"type": "integer", "minimum": 8},
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "T_end": {"type": "number", "exclusiveMinimum": 0},
                "cadence": {"type": "integer", "minimum": 1},
                "checkpoint_every": {"type": "integer", "minimum": 0},
                "seed": {"type": "integer"},
                "form": {"enum": ["w", "y"]},
            },
        },
        "design": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "N": {"type": ["integer", "null"], "minimum": 1},
                "pole_strategy": {"enum": ["preserve", "shifted"]},
                "tail_reference": {"enum": ["continuous", "discrete"]},
                "s2_variant": {"enum": ["squared", "literal"]},
                "ntilde_cap": {"type": ["integer", "null"], "minimum": 2},
                "certify": {"type": "boolean"},
            },
        },
        "strategy": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["open_loop", "always_on", "wait_then_control"]},
                "rho": {"oneOf": [{"type": "number", "exclusiveMinimum": 0}, {"const": "certificate"}]},
                "T1": {"type": "number", "minimum": 0},
            },
        },
        "initial": {
            "type": "object",
            "additionalProperties": False,
            "minProperties": 1,
            "properties": {
                "eigenmode": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["n"],
                    "properties": {"n": {"type": "integer", "minimum": 1}, "amplitude": _number},
                },
                "sine_combo": {
                    "type": "array",
                    "minItems": 1,
                    "items": {"type": "array", "prefixItems": [{"type": "integer", "minimum": 1}, _number],
                              "minItems": 2, "maxItems": 2},
                },
                "random_H10": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["norm"],
                    "properties": {"norm": {"type": "number", "exclusiveMinimum": 0}, "seed": {"type": "integer"}},
                },
                "scale_H10": {"type": "number", "exclusiveMinimum": 0},
                "scale_H10_rho": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "analysis": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "window": {"type": ["array", "null"], "items": _number, "minItems": 2, "maxItems": 2},
                "column": {"enum": ["h1_y", "l2_y", "h1_w", "l2_w"]},
                "monitors": {"type": "boolean"},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"directory": {"type": "string"}, "plot": {"type": "boolean"}},
        },
    },
}

DEFAULTS = {
    "problem": {"coefficients": {"constant": {"a": 1.0, "b": -1.0}}, "nonlinearity": {"kind": "burgers"}},
    "numerics": {"M": 400, "dt": 1e-4, "T_end": 3.0, "cadence": 100, "checkpoint_every": 0, "seed": 0, "form": "w"},
    "design": {"N": None, "pole_strategy": "preserve", "tail_reference": "continuous", "s2_variant": "squared",
               "ntilde_cap": None, "certify": True},
    "strategy": {"kind": "always_on"},
    "initial": {"eigenmode": {"n": 1, "amplitude": 0.1}},
    "analysis": {"window": None, "column": "h1_y", "monitors": True},
    "output": {"directory": "out", "plot": False},
}


class ConfigError(ValueError):
    """Schema or consistency violation; the message starts with the offending field path."""


def _path(error) -> str:
    return ".".join(str(p) for p in error.absolute_path) or "<root>"


def _merge(defaults: dict, given: dict) -> dict:
    out = copy.deepcopy(defaults)
    for k, v in given.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("initial", "coefficients", "nonlinearity"):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass(frozen=True)
class RunConfig:
    problem: dict
    numerics: dict
    design: dict
    strategy: dict
    initial: dict
    analysis: dict
    output: dict

    def to_dict(self) -> dict:
        return {k: copy.deepcopy(getattr(self, k)) for k in SCHEMA["properties"]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def coefficient_field(self) -> CoefficientField:
        return coefficients_from_spec(self.problem["coefficients"])

    def nonlinearity(self) -> Nonlinearity:
        spec = self.problem["nonlinearity"]
        if spec["kind"] == "allen_cahn":
            return Nonlinearity.allen_cahn(spec.get("lambda", 1.0))
        return Nonlinearity(spec["kind"])

    def problem_spec(self) -> ProblemSpec:
        return ProblemSpec(self.coefficient_field(), float(self.problem["q"]), self.nonlinearity(),
                           float(self.problem["delta"]))

    def strategy_object(self, rho: float | None = None):
        kind = self.strategy["kind"]
        if kind == "open_loop":
            return OpenLoop()
        if kind == "always_on":
            return AlwaysOn()
        if "T1" in self.strategy:
            return WaitThenControl(T1=float(self.strategy["T1"]))
        r = self.strategy.get("rho", "certificate")
        if r == "certificate":
            if rho is None or rho != rho or rho == float("inf"):
                raise ConfigError("strategy.rho: 'certificate' needs a finite radius from a stability certificate")
            r = rho
        return WaitThenControl(rho=float(r))

    def sim_config(self, initial=None, rho: float | None = None) -> SimConfig:
        n = self.numerics
        init = {k: v for k, v in self.initial.items() if k != "scale_H10_rho"} if initial is None else initial
        return SimConfig(self.problem_spec(), M=n["M"], dt=n["dt"], T_end=n["T_end"], initial=init,
                         strategy=self.strategy_object(rho), form=n["form"], cadence=n["cadence"],
                         checkpoint_every=n["checkpoint_every"], seed=n["seed"])


def coefficients_from_spec(spec: dict) -> CoefficientField:
    if "constant" in spec:
        c = spec["constant"]
        return CoefficientField.constant(float(c["a"]), float(c["b"]))
    p = spec["polynomial"]
    return CoefficientField.polynomial(p["a"], p["b"])


def parse_config(source) -> RunConfig:
    """Validate a config given as a path, JSON text or dict and fill the defaults.

    Raises :class:`ConfigError` (schema) or :class:`~parastab.HypothesisError`
    (coefficients violating ``min a > 0`` / ``max b < 0``).
    """
    if isinstance(source, dict):
        data = copy.deepcopy(source)
    else:
        text = str(source)
        p = Path(text) if not text.lstrip().startswith("{") else None
        if p is not None:
            if not p.is_file():
                raise ConfigError(f"<file>: cannot read config {text!r}")
            text = p.read_text()
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"<root>: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ConfigError(f"{_path(e)}: {e.message}")
    merged = _merge(DEFAULTS, data)
    errors = sorted(validator.iter_errors(merged), key=lambda e: list(e.absolute_path))
    if errors:
        raise ConfigError(f"{_path(errors[0])}: {errors[0].message}")
    cfg = RunConfig(**{k: merged[k] for k in SCHEMA["properties"]})
    cfg.coefficient_field().check(Grid(cfg.numerics["M"]))
    if cfg.strategy["kind"] == "wait_then_control" and "T1" in cfg.strategy and "rho" in cfg.strategy:
        raise ConfigError("strategy: give either rho or T1, not both")
    return cfg


def serialize_config(cfg: RunConfig) -> str:
    return cfg.to_json()
