"""JSON experiment configurations.

A config is one JSON object::

    {
      "schema_version": 1,
      "kind": "simulate" | "solve" | "verify" | "compare",
      "seed": 12345,
      "model": {"states": ["a", "b"],
                "intensities": [{"from": "a", "to": "b", "field": {"kind": "constant", "rate": 0.5}}]},
      "params": {...},
      "out": "results"
    }

Fields are ``constant``, ``product`` (with ``time``/``duration`` factors),
``table`` and the shorthand ``weibull``.  Factors are ``constant``,
``exponential``, ``power`` and ``piecewise``.  :meth:`ExperimentConfig.to_dict`
gives the fully resolved form, with every default filled in, and parses back
to an equal config.
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass

from .errors import ConfigError
from .state_model import (Constant, ConstantField, Exponential, IntensityModel, PiecewiseConstant, PowerLaw,
                          ProductField, StateSpace, TableField, validate, weibull_field)

SCHEMA_VERSION = 1
KINDS = ("simulate", "solve", "verify", "compare")
CHECKS = ("two_jump", "derivative_limit", "dominating_bound", "quick_cycle", "forward_residual",
          "embedded_chain", "conservation")

_DEFAULTS = {
    "simulate": {"i0": None, "s": 0.0, "u": 0.0, "horizon": None, "n_paths": None, "max_jumps": 10 ** 6},
    "solve": {"i0": None, "s": 0.0, "u": 0.0, "t_end": None, "dt": None, "output_times": None},
    "compare": {"i0": None, "s": 0.0, "u": 0.0, "t": None, "dt": None, "n_paths": None, "d_grid": [],
                "k_se": 3.0, "abs_tol": 5e-3},
    "verify": {"checks": None},
}

_CHECK_DEFAULTS = {
    "two_jump": {"i": None, "t": 0.0, "u": 0.0, "h_list": None, "n_paths": None},
    "derivative_limit": {"t": None, "u": 0.0, "h_list": None, "dt": None, "min_order": 0.9, "final_tol": 2e-2},
    "dominating_bound": {"t": None, "u": 0.0, "h_list": None, "dt": 1e-3},
    "quick_cycle": {"i": None, "t": 0.0, "u": 0.0, "h_list": None, "n_paths": None},
    "forward_residual": {"i0": None, "s": 0.0, "u": 0.0, "d": None, "t_grid": None, "dts": [4e-3, 2e-3],
                         "max_ratio": 0.6},
    "embedded_chain": {"n_paths": None, "n_events": None, "significance": 0.01, "y0": None},
    "conservation": {"i0": None, "s": 0.0, "u": 0.0, "t_end": None, "dt": None, "per_unit_time": 1e-6},
}


# ---------------------------------------------------------------------------
# model specs
# ---------------------------------------------------------------------------


def _num(d, key, where):
    try:
        v = d[key]
    except KeyError:
        raise ConfigError(f"{where}: missing '{key}'") from None
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{where}: '{key}' must be a finite number")
    return float(v)


def parse_factor(spec: dict, where: str = "factor"):
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError(f"{where}: expected an object with a 'kind'")
    kind = spec["kind"]
    try:
        if kind == "constant":
            return Constant(_num(spec, "value", where))
        if kind == "exponential":
            return Exponential(_num(spec, "a", where), _num(spec, "b", where))
        if kind == "power":
            return PowerLaw(_num(spec, "a", where), _num(spec, "p", where))
        if kind == "piecewise":
            return PiecewiseConstant(tuple(spec["breaks"]), tuple(spec["values"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None
    raise ConfigError(f"{where}: unknown factor kind {kind!r}")


def parse_field(spec: dict, where: str = "field"):
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return ConstantField(float(spec))
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError(f"{where}: expected a number or an object with a 'kind'")
    kind = spec["kind"]
    try:
        if kind == "constant":
            return ConstantField(_num(spec, "rate", where))
        if kind == "product":
            return ProductField(parse_factor(spec.get("time", {"kind": "constant", "value": 1.0}), where + ".time"),
                                parse_factor(spec.get("duration", {"kind": "constant", "value": 1.0}),
                                             where + ".duration"))
        if kind == "weibull":
            time = parse_factor(spec["time"], where + ".time") if "time" in spec else None
            return weibull_field(_num(spec, "shape", where), float(spec.get("scale", 1.0)), time)
        if kind == "table":
            return TableField(tuple(spec["t_edges"]), tuple(spec["u_edges"]),
                              tuple(tuple(r) for r in spec["values"]), bool(spec.get("clamp", False)))
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None
    raise ConfigError(f"{where}: unknown field kind {kind!r}")


def parse_model(spec: dict) -> IntensityModel:
    if not isinstance(spec, dict):
        raise ConfigError("model: expected an object")
    try:
        states = StateSpace(tuple(spec["states"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"model.states: {exc}") from None
    entries = {}
    for n, e in enumerate(spec.get("intensities", [])):
        where = f"model.intensities[{n}]"
        try:
            i, j = states.index(e["from"]), states.index(e["to"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: {exc}") from None
        if i == j:
            raise ConfigError(f"{where}: diagonal intensities are derived and cannot be given")
        if (i, j) in entries:
            raise ConfigError(f"{where}: duplicate entry {e['from']} -> {e['to']}")
        entries[(i, j)] = parse_field(e.get("field"), where + ".field")
    return IntensityModel(states, entries)


# ---------------------------------------------------------------------------
# experiment configs
# ---------------------------------------------------------------------------


def _fill(given: dict, defaults: dict, where: str) -> dict:
    if not isinstance(given, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    out = {}
    for k, v in defaults.items():
        val = given.get(k, v)
        if val is None and k not in ("output_times", "y0"):
            raise ConfigError(f"{where}: '{k}' is required")
        out[k] = copy.deepcopy(val)
    return out


def _positive(p, keys, where):
    for k in keys:
        v = p[k]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0 or not math.isfinite(v):
            raise ConfigError(f"{where}: '{k}' must be a positive number")


def _nonneg(p, keys, where):
    for k in keys:
        v = p[k]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not v >= 0 or not math.isfinite(v):
            raise ConfigError(f"{where}: '{k}' must be a nonnegative number")


def _int(p, keys, where):
    for k in keys:
        v = p[k]
        if isinstance(v, bool) or not isinstance(v, int) or v < 1:
            raise ConfigError(f"{where}: '{k}' must be a positive integer")


def _divides(span, dt, where):
    n = round(span / dt)
    if n < 1 and span > 0 or abs(n * dt - span) > 1e-9 * max(1.0, span):
        raise ConfigError(f"{where}: dt={dt} does not divide the interval length {span}")


def _list(p, key, where, positive=True, descending=False):
    v = p[key]
    if not isinstance(v, list) or not v or not all(isinstance(x, (int, float)) and not isinstance(x, bool)
                                                   for x in v):
        raise ConfigError(f"{where}: '{key}' must be a nonempty list of numbers")
    if positive and any(not x > 0 for x in v):
        raise ConfigError(f"{where}: '{key}' entries must be positive")
    if descending and any(b >= a for a, b in zip(v, v[1:])):
        raise ConfigError(f"{where}: '{key}' must be strictly decreasing")


def _state(model, p, key, where):
    try:
        model.states.index(p[key])
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where}: '{key}': {exc}") from None


def _check_params(kind: str, p: dict, model: IntensityModel) -> float:
    """Validate kind-specific parameters; returns the time span the model must be valid on."""
    where = f"params ({kind})"
    if kind == "simulate":
        _state(model, p, "i0", where)
        _nonneg(p, ["s", "u", "horizon"], where)
        _int(p, ["n_paths", "max_jumps"], where)
        if not p["horizon"] >= p["s"]:
            raise ConfigError(f"{where}: horizon must be >= s")
        return p["horizon"]
    if kind == "solve":
        _state(model, p, "i0", where)
        _nonneg(p, ["s", "u", "t_end"], where)
        _positive(p, ["dt"], where)
        if not p["t_end"] >= p["s"]:
            raise ConfigError(f"{where}: t_end must be >= s")
        _divides(p["t_end"] - p["s"], p["dt"], where)
        if p["output_times"] is not None:
            if not isinstance(p["output_times"], list):
                raise ConfigError(f"{where}: output_times must be a list")
            _list(p, "output_times", where, positive=False)
            for t in p["output_times"]:
                if not (p["s"] <= t <= p["t_end"]):
                    raise ConfigError(f"{where}: output time {t} outside [s, t_end]")
                if t > p["s"]:
                    _divides(t - p["s"], p["dt"], where)
        return p["t_end"]
    if kind == "compare":
        _state(model, p, "i0", where)
        _nonneg(p, ["s", "u", "t", "abs_tol", "k_se"], where)
        _positive(p, ["dt"], where)
        _int(p, ["n_paths"], where)
        if not p["t"] >= p["s"]:
            raise ConfigError(f"{where}: t must be >= s")
        _divides(p["t"] - p["s"], p["dt"], where)
        if p["d_grid"]:
            _list(p, "d_grid", where, positive=False)
            if any(b < a for a, b in zip(p["d_grid"], p["d_grid"][1:])) or p["d_grid"][0] < 0:
                raise ConfigError(f"{where}: d_grid must be sorted and nonnegative")
        return p["t"]
    # verify
    checks = p["checks"]
    if not isinstance(checks, list) or not checks:
        raise ConfigError(f"{where}: 'checks' must be a nonempty list")
    end = 1.0
    for c in checks:
        end = max(end, _check_check(c, model))
    return end


def _check_check(c: dict, model) -> float:
    name = c["check"]
    where = f"check {name}"
    if name in ("two_jump", "quick_cycle"):
        _state(model, c, "i", where)
        _nonneg(c, ["t", "u"], where)
        _int(c, ["n_paths"], where)
        _list(c, "h_list", where, descending=True)
        return c["t"] + max(c["h_list"])
    if name == "derivative_limit":
        _nonneg(c, ["t", "u"], where)
        _positive(c, ["dt", "final_tol", "min_order"], where)
        _list(c, "h_list", where, descending=True)
        for h in c["h_list"]:
            _divides(h, c["dt"], where)
        return c["t"] + max(c["h_list"])
    if name == "dominating_bound":
        _nonneg(c, ["t", "u"], where)
        _positive(c, ["dt"], where)
        _list(c, "h_list", where)
        if any(h > 1 for h in c["h_list"]):
            raise ConfigError(f"{where}: h values must lie in (0, 1]")
        for h in c["h_list"]:
            _divides(h, c["dt"], where)
        return c["t"] + 1.0
    if name == "forward_residual":
        _state(model, c, "i0", where)
        _nonneg(c, ["s", "u"], where)
        _positive(c, ["d", "max_ratio"], where)
        _list(c, "t_grid", where, positive=False)
        _list(c, "dts", where)
        for dt in c["dts"]:
            for t in c["t_grid"]:
                _divides(t - c["s"], dt, where)
            _divides(c["d"], dt, where)
        return max(c["t_grid"]) + max(c["dts"])
    if name == "embedded_chain":
        _int(c, ["n_paths", "n_events"], where)
        _positive(c, ["significance"], where)
        if c["y0"] is not None:
            _state(model, c, "y0", where)
        if model.size < 3:
            raise ConfigError(f"{where}: needs a model with at least 3 states")
        return 1.0
    if name == "conservation":
        _state(model, c, "i0", where)
        _nonneg(c, ["s", "u", "t_end"], where)
        _positive(c, ["dt", "per_unit_time"], where)
        _divides(c["t_end"] - c["s"], c["dt"], where)
        return c["t_end"]
    raise ConfigError(f"unknown check {name!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    model: IntensityModel
    model_spec: dict
    params: dict
    seed: int
    out: str
    validation: dict
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "kind": self.kind,
            "seed": self.seed,
            "model": copy.deepcopy(self.model_spec),
            "params": copy.deepcopy(self.params),
            "out": self.out,
            "validation": dict(self.validation),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _resolve_checks(checks):
    if not isinstance(checks, list):
        raise ConfigError("params (verify): 'checks' must be a list")
    out = []
    for n, c in enumerate(checks):
        if not isinstance(c, dict) or c.get("check") not in CHECKS:
            raise ConfigError(f"params.checks[{n}]: 'check' must be one of {list(CHECKS)}")
        body = {k: v for k, v in c.items() if k != "check"}
        filled = _fill(body, _CHECK_DEFAULTS[c["check"]], f"params.checks[{n}] ({c['check']})")
        out.append({"check": c["check"], **filled})
    return out


def config_from_dict(raw: dict, seed: int | None = None, out: str | None = None) -> ExperimentConfig:
    """Parse, fill defaults and validate (including the model on its validation grid)."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    allowed = {"schema_version", "kind", "seed", "model", "params", "out", "validation"}
    if set(raw) - allowed:
        raise ConfigError(f"unknown top-level keys {sorted(set(raw) - allowed)}")
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}")
    kind = raw.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"kind must be one of {list(KINDS)}")
    seed = raw.get("seed") if seed is None else seed
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
        raise ConfigError("seed must be an integer in [0, 2^64)")
    model = parse_model(raw.get("model"))
    model_spec = model.to_dict()
    params = _fill(raw.get("params", {}), _DEFAULTS[kind], f"params ({kind})")
    if kind == "verify":
        params["checks"] = _resolve_checks(params["checks"])
    span = _check_params(kind, params, model)
    val = raw.get("validation", {})
    val = _fill(val, {"horizon": span, "max_duration": span + _max_u(params),
                      "resolution": 51}, "validation")
    _positive(val, ["horizon"], "validation")
    _nonneg(val, ["max_duration"], "validation")
    report = validate(model, float(val["horizon"]), float(val["max_duration"]), int(val["resolution"]))
    if not report.passed:
        first = report.issues[0]
        raise ConfigError(f"model failed validation: {first.kind} value {first.value} for "
                          f"{model.states.labels[first.i]}->{model.states.labels[first.j]} at t={first.t}, u={first.u}")
    out = out if out is not None else raw.get("out", "results")
    if not isinstance(out, str) or not out:
        raise ConfigError("out must be a nonempty path")
    return ExperimentConfig(kind, model, model_spec, params, int(seed), out, val)


def _max_u(params) -> float:
    us = [params.get("u", 0.0)] + [c.get("u", 0.0) for c in params.get("checks", [])]
    return float(max(us))


def load_config(path, seed: int | None = None, out: str | None = None) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return config_from_dict(raw, seed, out)
