"""Run configuration: strict schema, defaults, validation, hashing.

The defaults reproduce the reference experiment (lam=0.5, alpha=2.1,
Gamma(2,1) jumps, n=500, delta=1, flat-top kernel b=1/c=0.05, selector
pilot=1/J=20/kappa=1.5, grid 1.0:0.2:11), so `ouspec study --kind normality`
with no config file reruns it end to end.  Unknown keys are rejected.
"""
from __future__ import annotations

import hashlib
import json
from copy import deepcopy

import numpy as np

from ouspec.model import CppOuModel, make_jump
from ouspec.spectral import FlatTopKernel


class ConfigError(ValueError):
    pass


def default_config() -> dict:
    return {
        "model": {
            "lambda": 0.5,
            "alpha": 2.1,
            "jump": {"kind": "gamma", "shape": 2.0, "rate": 1.0},
        },
        "sampling": {"n": 500, "delta": 1.0, "seed": 1, "burn_in": None},
        "spectral": {
            "h": None,
            "selector": {"pilot": 1.0, "J": 20, "kappa": 1.5},
            "theta": None,
            "theta_c": 500.0,
            "kernel": {"b": 1.0, "c": 0.05},
            "quad_panels": 4096,
            "grid": {"start": 1.0, "step": 0.2, "count": 11},
        },
        "inference": {"tau": [0.15, 0.05, 0.01], "monotonize": False},
        "output": {"format": "csv", "path": None},
        "study": {
            "kind": None,
            "replications": None,
            "points": [1.5, 2.0, 2.5],
            "workers": 1,
        },
    }


def _type_name(v):
    return type(v).__name__


def _check(cond, path, msg):
    if not cond:
        raise ConfigError(f"config field '{path}': {msg}")


def _merge(base: dict, override: dict, path=""):
    out = deepcopy(base)
    for key, val in override.items():
        here = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key '{here}'")
        if isinstance(base[key], dict) and base[key]:
            _check(isinstance(val, dict), here, f"expected a mapping, got {_type_name(val)}")
            out[key] = _merge(base[key], val, here)
        else:
            out[key] = val
    return out


def _as_number(val, path, *, positive=False, nonneg=False, integer=False,
               allow_none=False):
    if val is None:
        _check(allow_none, path, "may not be null")
        return None
    _check(isinstance(val, (int, float)) and not isinstance(val, bool), path,
           f"expected a number, got {_type_name(val)}")
    if integer:
        _check(float(val).is_integer(), path, f"expected an integer, got {val}")
        val = int(val)
    if positive:
        _check(val > 0, path, f"must be positive, got {val}")
    if nonneg:
        _check(val >= 0, path, f"must be nonnegative, got {val}")
    return val


def validate_config(cfg: dict) -> dict:
    """Merge onto defaults, reject unknown keys, check field types and ranges."""
    cfg = _merge(default_config(), cfg or {})
    m = cfg["model"]
    _as_number(m["lambda"], "model.lambda", positive=True)
    _as_number(m["alpha"], "model.alpha", positive=True)
    jump = m["jump"]
    kind = jump.get("kind")
    _check(kind in ("gamma", "exponential"), "model.jump.kind",
           f"expected 'gamma' or 'exponential', got {kind!r}")
    _as_number(jump["rate"], "model.jump.rate", positive=True)
    if kind == "gamma":
        _as_number(jump["shape"], "model.jump.shape", positive=True)
    s = cfg["sampling"]
    _as_number(s["n"], "sampling.n", positive=True, integer=True)
    _as_number(s["delta"], "sampling.delta", positive=True)
    _as_number(s["seed"], "sampling.seed", nonneg=True, integer=True)
    _as_number(s["burn_in"], "sampling.burn_in", nonneg=True, allow_none=True)
    sp = cfg["spectral"]
    _as_number(sp["h"], "spectral.h", positive=True, allow_none=True)
    _as_number(sp["selector"]["pilot"], "spectral.selector.pilot", positive=True)
    J = _as_number(sp["selector"]["J"], "spectral.selector.J", positive=True, integer=True)
    _check(J >= 2, "spectral.selector.J", f"must be at least 2, got {J}")
    kappa = _as_number(sp["selector"]["kappa"], "spectral.selector.kappa", positive=True)
    _check(kappa > 1, "spectral.selector.kappa", f"must exceed 1, got {kappa}")
    _as_number(sp["theta"], "spectral.theta", positive=True, allow_none=True)
    _as_number(sp["theta_c"], "spectral.theta_c", positive=True)
    _as_number(sp["kernel"]["b"], "spectral.kernel.b", positive=True)
    c = _as_number(sp["kernel"]["c"], "spectral.kernel.c", positive=True)
    _check(c < 1, "spectral.kernel.c", f"must lie in (0, 1), got {c}")
    qp = _as_number(sp["quad_panels"], "spectral.quad_panels", positive=True, integer=True)
    _check(qp >= 256, "spectral.quad_panels", f"must be at least 256, got {qp}")
    g = sp["grid"]
    _as_number(g["start"], "spectral.grid.start", positive=True)
    _as_number(g["step"], "spectral.grid.step", positive=True)
    _as_number(g["count"], "spectral.grid.count", positive=True, integer=True)
    inf = cfg["inference"]
    _check(isinstance(inf["tau"], (list, tuple)) and len(inf["tau"]) > 0,
           "inference.tau", "expected a nonempty list of levels")
    for i, tau in enumerate(inf["tau"]):
        t = _as_number(tau, f"inference.tau[{i}]", positive=True)
        _check(t < 1, f"inference.tau[{i}]", f"must lie in (0, 1), got {t}")
    _check(isinstance(inf["monotonize"], bool), "inference.monotonize",
           f"expected true/false, got {_type_name(inf['monotonize'])}")
    out = cfg["output"]
    _check(out["format"] in ("csv", "json"), "output.format",
           f"expected 'csv' or 'json', got {out['format']!r}")
    st = cfg["study"]
    if st["kind"] is not None:
        from ouspec.experiments import STUDY_KINDS

        _check(st["kind"] in STUDY_KINDS, "study.kind",
               f"expected one of {STUDY_KINDS}, got {st['kind']!r}")
    _as_number(st["replications"], "study.replications", positive=True, integer=True,
               allow_none=True)
    _check(isinstance(st["points"], (list, tuple)) and len(st["points"]) > 0,
           "study.points", "expected a nonempty list")
    for i, p in enumerate(st["points"]):
        _as_number(p, f"study.points[{i}]", positive=True)
    _as_number(st["workers"], "study.workers", positive=True, integer=True)
    return cfg


def config_hash(cfg: dict) -> str:
    """Deterministic short hash of a resolved configuration."""
    payload = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(payload).hexdigest()[:12]


def build_model(cfg: dict) -> CppOuModel:
    m = cfg["model"]
    jump_fields = {k: v for k, v in m["jump"].items() if k != "kind"}
    return CppOuModel(
        lam=float(m["lambda"]),
        alpha=float(m["alpha"]),
        jump=make_jump(m["jump"]["kind"], **jump_fields),
    )


def build_kernel(cfg: dict) -> FlatTopKernel:
    k = cfg["spectral"]["kernel"]
    return FlatTopKernel(b=float(k["b"]), c=float(k["c"]))


def build_grid(cfg: dict) -> np.ndarray:
    g = cfg["spectral"]["grid"]
    return float(g["start"]) + float(g["step"]) * np.arange(int(g["count"]))


def resolve_theta(cfg: dict, n: int) -> float:
    sp = cfg["spectral"]
    if sp["theta"] is not None:
        return float(sp["theta"])
    return float(sp["theta_c"]) * np.sqrt(n) / np.log(n) ** 3


def apply_overrides(cfg: dict, assignments) -> dict:
    """Apply 'a.b.c=value' overrides (values parsed as JSON, else strings).

    Unknown keys are caught later by validate_config's merge onto defaults.
    """
    cfg = deepcopy(cfg)
    for item in assignments or []:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not of the form key.path=value")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = cfg
        parts = key.strip().split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"config key '{key.strip()}' nests under a scalar")
        node[parts[-1]] = value
    return cfg


def load_config_file(path: str) -> dict:
    import yaml

    with open(path) as f:
        text = f.read()
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"could not parse config file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must contain a mapping at top level")
    return data
