"""Exact, seed-deterministic simulation of the CPP-OU process.

Per interval of length dt the update is exact: given M ~ Poisson(alpha*lam*dt)
jump epochs uniform on the interval with iid sizes from the jump law,

    X_{t+dt} = exp(-lam dt) X_t + sum_i U_i exp(-lam (dt - tau_i)).

No discretization error is introduced; burn-in is one exact interval of the
requested length.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from ouspec.model import CppOuModel

_MAX_SEED = 2**64


@dataclass(frozen=True)
class PathConfig:
    n: int
    delta: float
    seed: int
    burn_in_time: float = 0.0
    x0: float = 0.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be at least 1, got {self.n}")
        if self.delta <= 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if self.burn_in_time < 0:
            raise ValueError(f"burn_in_time must be nonnegative, got {self.burn_in_time}")
        if self.x0 < 0:
            raise ValueError(f"x0 must be nonnegative, got {self.x0}")
        if not (0 <= int(self.seed) < _MAX_SEED):
            raise ValueError("seed must fit in an unsigned 64-bit integer")


@dataclass(frozen=True)
class SamplePath:
    delta: float
    values: np.ndarray
    seed: int

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("values must be a nonempty 1-d array")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def n(self):
        return self.values.size


def _interval_contributions(model, rng, steps, dt):
    """Per-interval jump sums sum_i U_i exp(-lam (dt - tau_i)), vectorized."""
    counts = rng.poisson(model.alpha * model.lam * dt, steps)
    total = int(counts.sum())
    if total == 0:
        return np.zeros(steps), counts
    taus = rng.uniform(0.0, dt, total)
    sizes = model.jump.sample(rng, total)
    weights = sizes * np.exp(-model.lam * (dt - taus))
    owner = np.repeat(np.arange(steps), counts)
    return np.bincount(owner, weights=weights, minlength=steps), counts


def _one_interval(model, rng, x0, dt):
    contrib, _ = _interval_contributions(model, rng, 1, dt)
    return np.exp(-model.lam * dt) * x0 + contrib[0]


def simulate_path(model: CppOuModel, cfg: PathConfig, return_jump_counts=False):
    """Simulate X_delta, ..., X_{n delta} exactly; deterministic given cfg.seed."""
    rng = np.random.default_rng(np.random.SeedSequence(int(cfg.seed)))
    x = cfg.x0
    if cfg.burn_in_time > 0:
        x = _one_interval(model, rng, x, cfg.burn_in_time)
    contrib, counts = _interval_contributions(model, rng, cfg.n, cfg.delta)
    decay = np.exp(-model.lam * cfg.delta)
    values, _ = lfilter([1.0], [1.0, -decay], contrib, zi=np.array([decay * x]))
    path = SamplePath(delta=cfg.delta, values=values, seed=int(cfg.seed))
    if return_jump_counts:
        return path, counts
    return path


def stationary_sample(model: CppOuModel, n: int, delta: float, seed: int) -> SamplePath:
    """Simulate from (approximate) stationarity: start at the stationary mean
    and discard a burn-in of 50 mean-reversion times."""
    cfg = PathConfig(
        n=n,
        delta=delta,
        seed=seed,
        burn_in_time=50.0 / model.lam,
        x0=model.stationary_mean,
    )
    return simulate_path(model, cfg)


def one_step_sample(model: CppOuModel, x0: float, t: float, size: int, seed: int):
    """iid draws of X_t | X_0 = x0 using the same exact interval mechanism."""
    if t <= 0:
        raise ValueError("t must be positive")
    if x0 < 0:
        raise ValueError("x0 must be nonnegative")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    contrib, _ = _interval_contributions(model, rng, size, t)
    return np.exp(-model.lam * t) * x0 + contrib


def spawn_seed(base_seed: int, index: int) -> int:
    """Independent 64-bit child seed for replication `index` of a study."""
    ss = np.random.SeedSequence(int(base_seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, np.uint64)[0])


def write_path_csv(sample: SamplePath, dest, extra_meta=None):
    """Write a path as CSV: '# key=value' header lines, then one value per line."""
    meta = {"delta": repr(sample.delta), "seed": str(sample.seed)}
    if extra_meta:
        meta.update({k: str(v) for k, v in extra_meta.items()})
    lines = [f"# {k}={v}" for k, v in meta.items()]
    lines.append("value")
    lines.extend(repr(float(v)) for v in sample.values)
    text = "\n".join(lines) + "\n"
    if isinstance(dest, (str, bytes)) or hasattr(dest, "__fspath__"):
        with open(dest, "w") as f:
            f.write(text)
    else:
        dest.write(text)


def read_path_csv(src):
    """Read a path written by write_path_csv; returns (SamplePath, metadata)."""
    if isinstance(src, (str, bytes)) or hasattr(src, "__fspath__"):
        with open(src) as f:
            lines = f.read().splitlines()
    else:
        lines = src.read().splitlines()
    meta = {}
    values = []
    seen_header = False
    for line in lines:
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            meta[key.strip()] = val.strip()
        elif not seen_header and line == "value":
            seen_header = True
        else:
            values.append(float(line))
    if "delta" not in meta or "seed" not in meta:
        raise ValueError("path CSV is missing the delta/seed header")
    sample = SamplePath(
        delta=float(meta["delta"]), values=np.array(values), seed=int(meta["seed"])
    )
    return sample, meta
