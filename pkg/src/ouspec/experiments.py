"""Monte Carlo studies: normality of the studentized estimator, joint band
coverage, bandwidth-selection diagnostics, consistency trends, and the bundled
numerical-oracle suite.

Replication r draws its path from an independent child stream of the base
seed, so results depend only on (base_seed, r): adding or removing other
replications never changes a record, and merges are by replication index.
"""
from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import integrate, stats as sps

from ouspec.inference import (
    confidence_band,
    estimate,
    quantile_max_abs_normal,
    select_bandwidth,
    studentized_stats,
    variance_profile,
)
from ouspec.model import CppOuModel, g_density, transition_cdf, true_cf, true_k
from ouspec.simulate import one_step_sample, spawn_seed, stationary_sample
from ouspec.spectral import (
    EcfCache,
    FlatTopKernel,
    SpectralConfig,
    default_design_grid,
    default_theta,
    ecf,
    estimate_k_sharp,
    phi_w,
)

STUDY_KINDS = ("normality", "coverage", "bandwidth-diagnostic", "consistency", "oracle")


class StudyError(RuntimeError):
    pass


@dataclass(frozen=True)
class StudySpec:
    model: CppOuModel
    kind: str
    n: int = 500
    delta: float = 1.0
    grid: np.ndarray = field(default_factory=default_design_grid)
    kernel: FlatTopKernel = field(default_factory=FlatTopKernel)
    h: float | None = None          # None -> selector re-run per replication
    pilot: float = 1.0
    J: int = 20
    kappa: float = 1.5
    theta_c: float = 500.0
    quad_panels: int = 4096
    replications: int = 1
    base_seed: int = 20260809
    points: tuple = (1.5, 2.0, 2.5)           # normality study
    taus: tuple = (0.15, 0.05, 0.01)          # coverage study
    n_large: int = 4000                       # consistency study
    workers: int = 1

    def __post_init__(self):
        if self.kind not in STUDY_KINDS:
            raise ValueError(f"unknown study kind {self.kind!r}; expected one of {STUDY_KINDS}")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        g = np.ascontiguousarray(self.grid, dtype=float)
        g.flags.writeable = False
        object.__setattr__(self, "grid", g)

    def theta(self, n=None):
        return default_theta(self.n if n is None else n, self.theta_c)

    def spectral_config(self, h, n=None, design_points=None):
        import warnings

        from ouspec.spectral import DesignSpacingWarning

        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DesignSpacingWarning)
            return SpectralConfig(
                h=float(h),
                theta=self.theta(n),
                kernel=self.kernel,
                quad_panels=self.quad_panels,
                design_points=self.grid if design_points is None else design_points,
            )


def spec_hash(spec: StudySpec) -> str:
    payload = repr(asdict(spec)).encode()
    return hashlib.sha256(payload).hexdigest()[:12]


def _fit_once(spec: StudySpec, sample, design_points=None):
    """Select h when unset, then estimate at design_points (default: grid)."""
    if spec.h is None:
        sel = select_bandwidth(
            sample, spec.spectral_config(h=spec.pilot), spec.pilot, spec.J, spec.kappa
        )
        h = sel.chosen
    else:
        sel = None
        h = spec.h
    cfg = spec.spectral_config(h=h, n=sample.n, design_points=design_points)
    return estimate(sample, cfg), sel


def _normality_rep(spec: StudySpec, r: int):
    seed = spawn_seed(spec.base_seed, r)
    sample = stationary_sample(spec.model, spec.n, spec.delta, seed)
    pts = np.asarray(spec.points, dtype=float)
    est, _ = _fit_once(spec, sample, design_points=pts)
    stat = studentized_stats(est, true_k(spec.model, pts))
    return {
        "replication": r,
        "seed": seed,
        "h": est.h,
        "khat": est.khat.tolist(),
        "sigma_hat": est.sigma_hat.tolist(),
        "stat": stat.tolist(),
    }


def _map_replications(fn, spec: StudySpec, args):
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            return list(pool.map(fn, args, chunksize=8))
    return [fn(a) for a in args]


class _RepRunner:
    """Picklable (spec, fn-name) wrapper for process pools."""

    def __init__(self, spec, fn):
        self.spec = spec
        self.fn = fn

    def __call__(self, r):
        return globals()[self.fn](self.spec, r)


@dataclass
class NormalityResult:
    spec: StudySpec
    records: list
    summary: dict

    @property
    def passed(self):
        return self.summary["degenerate_fraction"] <= 0.01


def run_normality_study(spec: StudySpec) -> NormalityResult:
    """Distribution of the studentized statistics at the requested points."""
    if spec.kind != "normality":
        raise ValueError("spec.kind must be 'normality'")
    records = _map_replications(
        _RepRunner(spec, "_normality_rep"), spec, range(spec.replications)
    )
    stats = np.array([rec["stat"] for rec in records])  # (R, P)
    khats = np.array([rec["khat"] for rec in records])
    summary = {"points": list(spec.points), "replications": spec.replications}
    per_point = []
    n_degen = int(np.isnan(stats).any(axis=1).sum())
    for i, x in enumerate(spec.points):
        v = stats[:, i]
        v = v[np.isfinite(v)]
        entry = {
            "x": float(x),
            "mean": float(np.mean(v)) if v.size else float("nan"),
            "sd": float(np.std(v, ddof=1)) if v.size > 1 else float("nan"),
            "max_abs": float(np.max(np.abs(v))) if v.size else float("nan"),
            "ks_normal": float(sps.kstest(v, "norm").statistic) if v.size > 1 else float("nan"),
        }
        # empirically centered-and-scaled alternative normalization
        kh = khats[:, i]
        if kh.size > 1 and np.std(kh, ddof=1) > 0:
            z = (kh - kh.mean()) / kh.std(ddof=1)
            entry["ks_normal_empirical"] = float(sps.kstest(z, "norm").statistic)
        per_point.append(entry)
    summary["per_point"] = per_point
    summary["degenerate_fraction"] = n_degen / spec.replications
    return NormalityResult(spec=spec, records=records, summary=summary)


def _coverage_rep(spec: StudySpec, r: int):
    seed = spawn_seed(spec.base_seed, r)
    sample = stationary_sample(spec.model, spec.n, spec.delta, seed)
    est, _ = _fit_once(spec, sample)
    truth = true_k(spec.model, spec.grid)
    rec = {
        "replication": r,
        "seed": seed,
        "h": est.h,
        "khat": est.khat.tolist(),
        "sigma_hat": est.sigma_hat.tolist(),
    }
    for tau in spec.taus:
        band = confidence_band(est, tau)
        inside = (band.lower <= truth) & (truth <= band.upper)
        rec[f"inside_tau{tau}"] = inside.tolist()
        rec[f"width_tau{tau}"] = (band.upper - band.lower).tolist()
    return rec


@dataclass
class CoverageResult:
    spec: StudySpec
    records: list
    summary: dict


def run_coverage_study(spec: StudySpec) -> CoverageResult:
    """Joint and pointwise coverage of the simultaneous bands."""
    if spec.kind != "coverage":
        raise ValueError("spec.kind must be 'coverage'")
    records = _map_replications(
        _RepRunner(spec, "_coverage_rep"), spec, range(spec.replications)
    )
    summary = {
        "grid": spec.grid.tolist(),
        "replications": spec.replications,
        "taus": list(spec.taus),
        "coverage": {},
    }
    for tau in spec.taus:
        inside = np.array([rec[f"inside_tau{tau}"] for rec in records])  # (R, N)
        widths = np.array([rec[f"width_tau{tau}"] for rec in records])
        summary["coverage"][str(tau)] = {
            "joint": float(inside.all(axis=1).mean()),
            "pointwise": inside.mean(axis=0).tolist(),
            "mean_width": widths.mean(axis=0).tolist(),
        }
    return CoverageResult(spec=spec, records=records, summary=summary)


def _bandwidth_rep(spec: StudySpec, r: int):
    seed = spawn_seed(spec.base_seed, r)
    sample = stationary_sample(spec.model, spec.n, spec.delta, seed)
    sel = select_bandwidth(
        sample, spec.spectral_config(h=spec.pilot), spec.pilot, spec.J, spec.kappa
    )
    truth = true_k(spec.model, spec.grid)
    errors = np.max(np.abs(sel.estimates - truth), axis=1)
    return {
        "replication": r,
        "seed": seed,
        "candidates": sel.candidates.tolist(),
        "distances": sel.distances.tolist(),
        "errors": errors.tolist(),
        "chosen": sel.chosen,
        "chosen_index": sel.chosen_index,
        "fallback_used": sel.fallback_used,
    }


@dataclass
class BandwidthDiagnosticResult:
    spec: StudySpec
    records: list
    summary: dict


def run_bandwidth_diagnostic(spec: StudySpec) -> BandwidthDiagnosticResult:
    """Adjacent-estimate distances and true max-grid errors per candidate."""
    if spec.kind != "bandwidth-diagnostic":
        raise ValueError("spec.kind must be 'bandwidth-diagnostic'")
    records = _map_replications(
        _RepRunner(spec, "_bandwidth_rep"), spec, range(spec.replications)
    )
    chosen = [rec["chosen"] for rec in records]
    ratios = []
    for rec in records:
        errs = np.asarray(rec["errors"])
        ratios.append(errs[rec["chosen_index"]] / errs.min())
    summary = {
        "replications": spec.replications,
        "chosen": chosen,
        "error_ratio_chosen_vs_best": [float(v) for v in ratios],
    }
    return BandwidthDiagnosticResult(spec=spec, records=records, summary=summary)


def _consistency_rep(spec: StudySpec, r: int):
    seed = spawn_seed(spec.base_seed, r)
    truth = true_k(spec.model, spec.grid)
    out = {"replication": r, "seed": seed}
    for label, n in (("small", spec.n), ("large", spec.n_large)):
        sample = stationary_sample(spec.model, n, spec.delta, seed)
        spec_n = replace(spec, n=n)
        est, sel = _fit_once(spec_n, sample)
        out[f"h_{label}"] = est.h
        out[f"err_{label}"] = float(np.max(np.abs(est.khat - truth)))
    return out


@dataclass
class ConsistencyResult:
    spec: StudySpec
    records: list
    summary: dict


def run_consistency_study(spec: StudySpec) -> ConsistencyResult:
    """Paired-seed max-grid errors at the small and large sample sizes."""
    if spec.kind != "consistency":
        raise ValueError("spec.kind must be 'consistency'")
    records = _map_replications(
        _RepRunner(spec, "_consistency_rep"), spec, range(spec.replications)
    )
    small = np.array([rec["err_small"] for rec in records])
    large = np.array([rec["err_large"] for rec in records])
    summary = {
        "replications": spec.replications,
        "n_small": spec.n,
        "n_large": spec.n_large,
        "median_err_small": float(np.median(small)),
        "median_err_large": float(np.median(large)),
        "fraction_improved": float((large < small).mean()),
    }
    return ConsistencyResult(spec=spec, records=records, summary=summary)


# --- numerical oracles -------------------------------------------------------

def ks_distance_to_law(sorted_draws, F_right, F_left=None):
    """Two-sided Kolmogorov distance sup_y |F_emp(y) - F(y)| for a law that
    may carry atoms: F_right are CDF values at the sorted draws, F_left the
    corresponding left limits (defaults to F_right for continuous laws)."""
    if F_left is None:
        F_left = F_right
    n = sorted_draws.size
    _, idx, counts = np.unique(sorted_draws, return_index=True, return_counts=True)
    cum = np.cumsum(counts)
    last = idx + counts - 1
    upper = np.abs(cum / n - F_right[last])
    lower = np.abs(F_left[last] - (cum - counts) / n)
    return float(np.max(np.maximum(upper, lower)))


def oracle_transition(model: CppOuModel, x0: float, t: float, ndraws: int, seed: int,
                      draws=None):
    """KS distance between one-step simulator draws and the transition law,
    plus the error of the empirical no-jump atom frequency."""
    if draws is None:
        draws = one_step_sample(model, x0, t, ndraws, seed)
    sorted_draws = np.sort(draws)
    F_right = np.asarray(transition_cdf(model, x0, t, sorted_draws))
    atom_site = math.exp(-model.lam * t) * x0
    atom = math.exp(-model.alpha * model.lam * t)
    F_left = F_right - atom * (sorted_draws == atom_site)
    ks = ks_distance_to_law(sorted_draws, F_right, F_left)
    atom_freq = float(np.mean(draws == atom_site))
    atom_err = abs(atom_freq - atom)
    return {"ks": ks, "atom_freq": atom_freq, "atom_err": atom_err}


def oracle_g_mass(model: CppOuModel, t: float):
    """|integral of g(.; lam t) - 1| by adaptive quadrature."""
    val, _ = integrate.quad(
        lambda u: g_density(model, u, t), 0.0, np.inf, limit=400
    )
    return abs(val - 1.0)


def oracle_cf(model: CppOuModel, n: int, seed: int, t_max: float = 5.0, n_t: int = 101):
    """sup over |t| <= t_max of |ecf - true cf| on a long stationary path
    (conjugation makes the t >= 0 half sufficient)."""
    sample = stationary_sample(model, n, 1.0, seed)
    ts = np.linspace(0.0, t_max, n_t)
    emp = ecf(sample, ts)
    theo = true_cf(model, ts)
    return float(np.max(np.abs(emp - theo)))


def _sigma_two_pass(sample, cfg):
    """From-scratch two-pass variance at the design points: trapezoid K_n per
    observation, explicit mean, then squared deviations.  Deliberately avoids
    the production kernel path."""
    x = sample.values
    n = x.size
    s = np.linspace(0.0, 1.0 / cfg.h, cfg.quad_panels + 1)
    phi = np.exp(1j * np.outer(s, x)).mean(axis=1)
    floor = 1.0 / np.sqrt(n)
    mod = np.abs(phi)
    phi = np.where(mod < floor, phi * (floor / np.maximum(mod, 1e-300)), phi)
    w = np.full(s.size, s[1] - s[0])
    w[0] *= 0.5
    w[-1] *= 0.5
    gvec = phi_w(cfg.kernel, s * cfg.h) / phi * w
    out = np.empty(cfg.design_points.size)
    for ell, xp in enumerate(cfg.design_points):
        V = np.empty(n)
        for j in range(n):
            if abs(x[j]) <= cfg.theta:
                kn = (cfg.h / np.pi) * np.real(np.sum(np.exp(-1j * s * (xp - x[j])) * gvec))
                V[j] = x[j] * kn
            else:
                V[j] = 0.0
        mean = V.sum() / n
        out[ell] = np.sum((V - mean) ** 2) / n
    return out


def oracle_sigma_two_pass(model: CppOuModel, seed: int, h: float = 0.5, n: int = 200,
                          quad_panels: int = 1024):
    """Max relative difference between the production variance estimator and
    the from-scratch two-pass evaluation of its defining formula."""
    sample = stationary_sample(model, n, 1.0, seed)
    import warnings

    from ouspec.spectral import DesignSpacingWarning

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DesignSpacingWarning)
        cfg = SpectralConfig(
            h=h, theta=default_theta(n), quad_panels=quad_panels,
            design_points=np.array([1.5, 2.0, 2.5]),
        )
    fast = variance_profile(sample, cfg, cfg.design_points)
    slow = _sigma_two_pass(sample, cfg)
    scale = np.maximum(np.abs(slow), 1e-12)
    return float(np.max(np.abs(fast - slow) / scale))


def oracle_psi_identity(model: CppOuModel, seed: int, n_probes: int = 1000, n: int = 200):
    """Max relative difference between the simplified ratio
    2i Im[dphi/phi] and the literal quotient dphi_sharp/phi_sharp at probe
    frequencies where no stabilization clamp fires."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    used = 0
    samples_needed = max(1, n_probes // 100)
    for k in range(samples_needed):
        sample = stationary_sample(model, n, 1.0, spawn_seed(seed, k))
        x = sample.values
        theta = default_theta(n)
        xw = np.where(np.abs(x) <= theta, x, 0.0)
        ts = rng.uniform(0.05, 2.0, 100)
        E = np.exp(1j * np.outer(ts, x))
        phi_p = E.mean(axis=1)
        dphi_p = (1j / n) * (E @ xw)
        keep = np.abs(phi_p) >= 1.5 / np.sqrt(n)  # clamp never fires here
        phi_p, dphi_p = phi_p[keep], dphi_p[keep]
        used += int(keep.sum())
        phi_m = np.conj(phi_p)
        dphi_m = -np.conj(dphi_p)
        literal = (dphi_p / phi_m + dphi_m * phi_p / phi_m**2) / (phi_p / phi_m)
        simplified = 2j * (dphi_p / phi_p).imag
        rel = np.abs(literal - simplified) / np.maximum(np.abs(literal), 1e-300)
        if rel.size:
            worst = max(worst, float(rel.max()))
    return {"max_rel": worst, "probes_used": used}


def oracle_quantile_mc(seed: int, ndraws: int = 1_000_000):
    """Max |analytic q_tau - Monte Carlo quantile| over the (N, tau) table."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for N in (1, 11, 50):
        z = np.empty(ndraws)
        block = 200_000
        for i0 in range(0, ndraws, block):
            i1 = min(i0 + block, ndraws)
            z[i0:i1] = np.abs(rng.standard_normal((i1 - i0, N))).max(axis=1)
        for tau in (0.15, 0.05, 0.01):
            qa = quantile_max_abs_normal(N, tau)
            qm = float(np.quantile(z, 1.0 - tau))
            worst = max(worst, abs(qa - qm))
    return worst


@dataclass
class OracleResult:
    name: str
    measured: float
    threshold: float

    @property
    def passed(self):
        return self.measured <= self.threshold


@dataclass
class OracleSuiteResult:
    spec: StudySpec
    results: list
    summary: dict

    @property
    def passed(self):
        return all(r.passed for r in self.results)


def run_oracle_suite(spec: StudySpec, ndraws_transition: int = 100_000,
                     ndraws_quantile: int = 1_000_000) -> OracleSuiteResult:
    """Bundle of the module-level numerical oracles with acceptance thresholds."""
    if spec.kind != "oracle":
        raise ValueError("spec.kind must be 'oracle'")
    model = spec.model
    base = spec.base_seed
    results = []
    for i, x0 in enumerate((0.0, model.stationary_mean)):
        tr = oracle_transition(model, x0, spec.delta, ndraws_transition, spawn_seed(base, 100 + i))
        results.append(OracleResult(f"transition_ks_x0={x0:g}", tr["ks"], 0.01))
        results.append(OracleResult(f"transition_atom_x0={x0:g}", tr["atom_err"], 0.01))
    for lt in (0.25, 0.5, 1.0, 2.0):
        t = lt / model.lam
        results.append(OracleResult(f"g_mass_lt={lt:g}", oracle_g_mass(model, t), 1e-6))
    results.append(
        OracleResult("cf_sup_dist", oracle_cf(model, 100_000, spawn_seed(base, 200)), 0.02)
    )
    results.append(
        OracleResult(
            "sigma_two_pass_rel",
            oracle_sigma_two_pass(model, spawn_seed(base, 300)),
            1e-12,
        )
    )
    psi = oracle_psi_identity(model, spawn_seed(base, 400))
    results.append(OracleResult("psi_identity_rel", psi["max_rel"], 1e-10))
    results.append(
        OracleResult(
            "quantile_mc", oracle_quantile_mc(spawn_seed(base, 500), ndraws_quantile), 0.01
        )
    )
    summary = {
        "results": [
            {"name": r.name, "measured": r.measured, "threshold": r.threshold,
             "passed": r.passed}
            for r in results
        ],
    }
    summary["passed"] = all(r.passed for r in results)
    return OracleSuiteResult(spec=spec, results=results, summary=summary)


def run_study(spec: StudySpec):
    """Dispatch on spec.kind."""
    runner = {
        "normality": run_normality_study,
        "coverage": run_coverage_study,
        "bandwidth-diagnostic": run_bandwidth_diagnostic,
        "consistency": run_consistency_study,
        "oracle": run_oracle_suite,
    }[spec.kind]
    return runner(spec)
