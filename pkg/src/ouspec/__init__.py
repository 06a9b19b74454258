"""Spectral inference on the Levy measure of compound-Poisson-driven OU processes."""

from ouspec._backend import BACKEND
from ouspec.inference import (
    BandwidthSelection,
    ConfidenceBand,
    KEstimate,
    confidence_band,
    estimate,
    monotonize,
    quantile_max_abs_normal,
    select_bandwidth,
    studentized_stats,
    variance_hat,
)
from ouspec.model import (
    CppOuModel,
    ExponentialJumps,
    GammaJumps,
    QuadratureSpec,
    TransitionLaw,
    g_density,
    make_jump,
    transition_cdf,
    true_cf,
    true_k,
)
from ouspec.simulate import (
    PathConfig,
    SamplePath,
    one_step_sample,
    read_path_csv,
    simulate_path,
    stationary_sample,
    write_path_csv,
)
from ouspec.spectral import (
    EcfCache,
    FlatTopKernel,
    SpectralConfig,
    build_ecf_cache,
    default_design_grid,
    default_theta,
    ecf,
    ecf_deriv_trunc,
    estimate_k_naive,
    estimate_k_sharp,
    khat_n,
    phi_w,
    psi_hat,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BandwidthSelection",
    "ConfidenceBand",
    "CppOuModel",
    "EcfCache",
    "ExponentialJumps",
    "FlatTopKernel",
    "GammaJumps",
    "KEstimate",
    "PathConfig",
    "QuadratureSpec",
    "SamplePath",
    "SpectralConfig",
    "TransitionLaw",
    "build_ecf_cache",
    "confidence_band",
    "default_design_grid",
    "default_theta",
    "ecf",
    "ecf_deriv_trunc",
    "estimate",
    "estimate_k_naive",
    "estimate_k_sharp",
    "g_density",
    "khat_n",
    "make_jump",
    "monotonize",
    "one_step_sample",
    "phi_w",
    "psi_hat",
    "quantile_max_abs_normal",
    "read_path_csv",
    "select_bandwidth",
    "simulate_path",
    "stationary_sample",
    "studentized_stats",
    "transition_cdf",
    "true_cf",
    "true_k",
    "variance_hat",
    "write_path_csv",
]
