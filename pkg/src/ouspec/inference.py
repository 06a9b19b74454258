"""Variance estimation, simultaneous confidence bands, and bandwidth selection.

The studentized limit at distinct design points is standard normal with
identity covariance, so the simultaneous critical value q_tau is the
(1-tau)-quantile of the maximum of N iid absolute standard normals, available
in closed form; no resampling is involved.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import ndtri

from ouspec.simulate import SamplePath
from ouspec.spectral import (
    EcfCache,
    SpectralConfig,
    build_ecf_cache,
    estimate_k_sharp,
    khat_n_imag_residue,
    kn_at_observations,
)

UNRELIABLE_CLAMP_FRACTION = 0.05


@dataclass(frozen=True)
class KEstimate:
    """Point estimates and studentization ingredients at the design points."""

    x: np.ndarray
    khat: np.ndarray
    sigma_hat: np.ndarray
    n: int
    h: float
    theta: float
    quad_panels: int
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("x", "khat", "sigma_hat"):
            v = np.ascontiguousarray(getattr(self, name), dtype=float)
            v.flags.writeable = False
            object.__setattr__(self, name, v)
        if not (self.x.shape == self.khat.shape == self.sigma_hat.shape):
            raise ValueError("x, khat and sigma_hat must have matching shapes")
        if np.any(self.sigma_hat < 0):
            raise ValueError("sigma_hat must be nonnegative")


@dataclass(frozen=True)
class ConfidenceBand:
    x: np.ndarray
    tau: float
    q: float
    lower: np.ndarray
    upper: np.ndarray
    n: int
    h: float
    monotonized: bool = False
    unreliable: bool = False

    def __post_init__(self):
        for name in ("x", "lower", "upper"):
            v = np.ascontiguousarray(getattr(self, name), dtype=float)
            v.flags.writeable = False
            object.__setattr__(self, name, v)
        if np.any(self.lower > self.upper):
            raise ValueError("band lower envelope exceeds the upper envelope")


@dataclass(frozen=True)
class BandwidthSelection:
    pilot: float
    J: int
    kappa: float
    candidates: np.ndarray
    distances: np.ndarray
    chosen: float
    chosen_index: int
    fallback_used: bool
    estimates: np.ndarray  # (J, N) per-candidate design-point estimates

    def __post_init__(self):
        for name in ("candidates", "distances", "estimates"):
            v = np.ascontiguousarray(getattr(self, name), dtype=float)
            v.flags.writeable = False
            object.__setattr__(self, name, v)


def variance_profile(sample: SamplePath, cfg: SpectralConfig, xs, cache=None):
    """sigma^2 at each requested point: empirical variance of
    V_j = X_j 1{|X_j| <= theta} K_n((x - X_j)/h)."""
    if cache is None:
        cache = build_ecf_cache(sample, cfg)
    W = kn_at_observations(cache, cfg.kernel, xs)
    x = sample.values
    V = np.where(np.abs(x) <= cfg.theta, x, 0.0)[:, None] * W
    return np.maximum((V**2).mean(axis=0) - V.mean(axis=0) ** 2, 0.0)


def variance_hat(sample: SamplePath, cfg: SpectralConfig, x: float, cache=None) -> float:
    """Variance estimate sigma^2(x) at a single design point."""
    return float(variance_profile(sample, cfg, [float(x)], cache=cache)[0])


def estimate(sample: SamplePath, cfg: SpectralConfig, cache=None) -> KEstimate:
    """Full estimate at the design points: point values, sigma-hat, diagnostics."""
    if cache is None:
        cache = build_ecf_cache(sample, cfg)
    khat = estimate_k_sharp(sample, cfg, cache=cache)
    sig2 = variance_profile(sample, cfg, cfg.design_points, cache=cache)
    residue = khat_n_imag_residue(cache, cfg.kernel, cfg.design_points)
    diag = {
        "clamp_count": cache.clamp_count,
        "clamp_fraction": cache.clamp_fraction,
        "kn_imag_residue": float(np.max(residue)),
        "unreliable": bool(cache.clamp_fraction >= UNRELIABLE_CLAMP_FRACTION),
    }
    return KEstimate(
        x=cfg.design_points,
        khat=khat,
        sigma_hat=np.sqrt(sig2),
        n=sample.n,
        h=cfg.h,
        theta=cfg.theta,
        quad_panels=cfg.quad_panels,
        diagnostics=diag,
    )


def quantile_max_abs_normal(N: int, tau: float) -> float:
    """q with P(max_{j<=N} |xi_j| > q) = tau for iid standard normal xi."""
    if not 0 < tau < 1:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    if N < 1:
        raise ValueError(f"N must be a positive integer, got {N}")
    return float(ndtri((1.0 + (1.0 - tau) ** (1.0 / N)) / 2.0))


def confidence_band(est: KEstimate, tau: float) -> ConfidenceBand:
    """Simultaneous band: khat +- q_tau sigma_hat / (sqrt(n) h) at each point."""
    q = quantile_max_abs_normal(est.x.size, tau)
    half = q * est.sigma_hat / (math.sqrt(est.n) * est.h)
    return ConfidenceBand(
        x=est.x,
        tau=tau,
        q=q,
        lower=est.khat - half,
        upper=est.khat + half,
        n=est.n,
        h=est.h,
        unreliable=bool(est.diagnostics.get("unreliable", False)),
    )


def _decreasing_rearrangement(values):
    return np.sort(np.asarray(values, dtype=float))[::-1]


def monotonize(obj):
    """Decreasing rearrangement along the design grid.

    For a KEstimate the point estimates are rearranged; for a ConfidenceBand
    each envelope is rearranged separately.  Nonincreasing inputs are fixed
    points.  Returns a new object; never applied implicitly.
    """
    if isinstance(obj, KEstimate):
        return replace(obj, khat=_decreasing_rearrangement(obj.khat))
    if isinstance(obj, ConfidenceBand):
        return replace(
            obj,
            lower=_decreasing_rearrangement(obj.lower),
            upper=_decreasing_rearrangement(obj.upper),
            monotonized=True,
        )
    raise TypeError(f"cannot monotonize {type(obj).__name__}")


def select_bandwidth(sample: SamplePath, base_cfg: SpectralConfig,
                     pilot: float = 1.0, J: int = 20,
                     kappa: float = 1.5) -> BandwidthSelection:
    """Adjacent-estimate bandwidth selection over candidates h_j = j*pilot/J.

    Computes d_j = max-grid distance between estimates at adjacent candidates
    (j = 2..J) and picks the smallest j >= 2 with d_j < kappa * min_k d_k.
    If no candidate qualifies strictly (ties at the threshold), falls back to
    the argmin (smallest such j), recorded via fallback_used.
    """
    if J < 2:
        raise ValueError(f"J must be at least 2, got {J}")
    if kappa <= 1:
        raise ValueError(f"kappa must exceed 1, got {kappa}")
    if pilot <= 0:
        raise ValueError(f"pilot bandwidth must be positive, got {pilot}")
    candidates = np.array([j * pilot / J for j in range(1, J + 1)])
    ests = []
    # the caller's config already carried the spacing warning; the internal
    # candidate sweep should not repeat it J times
    import warnings

    from ouspec.spectral import DesignSpacingWarning

    for h in candidates:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DesignSpacingWarning)
            cfg_j = replace(base_cfg, h=float(h))
        ests.append(estimate_k_sharp(sample, cfg_j))
    ests = np.asarray(ests)
    distances = np.max(np.abs(np.diff(ests, axis=0)), axis=1)  # d_j, j=2..J
    threshold = kappa * distances.min()
    qualifying = np.nonzero(distances < threshold)[0]
    fallback = qualifying.size == 0
    idx = int(np.argmin(distances)) if fallback else int(qualifying[0])
    return BandwidthSelection(
        pilot=pilot,
        J=J,
        kappa=kappa,
        candidates=candidates,
        distances=distances,
        chosen=float(candidates[idx + 1]),
        chosen_index=idx + 1,
        fallback_used=fallback,
        estimates=ests,
    )


def studentized_stats(est: KEstimate, truth):
    """sqrt(n) h (khat - k)/sigma_hat per design point; NaN where sigma_hat=0."""
    truth = np.asarray(truth, dtype=float)
    if truth.shape != est.khat.shape:
        raise ValueError("truth must match the design grid")
    out = np.full(est.khat.shape, np.nan)
    ok = est.sigma_hat > 0
    out[ok] = (
        math.sqrt(est.n) * est.h * (est.khat[ok] - truth[ok]) / est.sigma_hat[ok]
    )
    return out
