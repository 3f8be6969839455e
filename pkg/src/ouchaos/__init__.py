"""Gaussian calculus, Wiener chaos second quantization and non-autonomous
Ornstein-Uhlenbeck evolution in truncated spectral coordinates."""

from . import errors
from .chaos import (ChaosExpansion, MultiIndex, enumerate_indices,
                    enumerate_up_to, eval_expansion, exp_functional_coeffs,
                    hermite_phi, l2_norm, monomial_coeffs, phi_alpha, project,
                    sigma_class_count)
from .evolution import (EvolutionFamily, NoiseFamily, OUModel, bignamini_check,
                        decay_ratio, hyper_threshold, mean_functional,
                        pst_apply, pst_contraction, pst_via_second_quant)
from .gaussian import (LinearMap, SpectralGaussian, cameron_martin_density,
                       cm_inner, cm_norm, exp_functional, expect,
                       pinv_sqrt_apply, range_ratio_norm, sqrt_apply,
                       white_noise)
from .numerics import (QuadScheme, gauss_expect, gh_nodes, gh_tensor,
                       mc_estimate, panel_integrate, psd_sqrt)
from .presets import (build_preset, diag_arctan_preset, heat1d_preset,
                      malliavin_preset)
from .secondquant import (CMContraction, PolarFactors, degree_block,
                          eigen_system, gamma_eigen, gamma_integral_apply,
                          gamma_matrix_element, gamma_series_apply,
                          hs_norm_gamma, hyper_witness, lq_norm_gamma,
                          mehler_factors, op_norm, permanent, polar_factors,
                          q0_threshold, x_extension)

__all__ = [
    "errors",
    "ChaosExpansion", "MultiIndex", "enumerate_indices", "enumerate_up_to",
    "eval_expansion", "exp_functional_coeffs", "hermite_phi", "l2_norm",
    "monomial_coeffs", "phi_alpha", "project", "sigma_class_count",
    "EvolutionFamily", "NoiseFamily", "OUModel", "bignamini_check",
    "decay_ratio", "hyper_threshold", "mean_functional", "pst_apply",
    "pst_contraction", "pst_via_second_quant",
    "LinearMap", "SpectralGaussian", "cameron_martin_density", "cm_inner",
    "cm_norm", "exp_functional", "expect", "pinv_sqrt_apply",
    "range_ratio_norm", "sqrt_apply", "white_noise",
    "QuadScheme", "gauss_expect", "gh_nodes", "gh_tensor", "mc_estimate",
    "panel_integrate", "psd_sqrt",
    "build_preset", "diag_arctan_preset", "heat1d_preset", "malliavin_preset",
    "CMContraction", "PolarFactors", "degree_block", "eigen_system",
    "gamma_eigen", "gamma_integral_apply", "gamma_matrix_element",
    "gamma_series_apply", "hs_norm_gamma", "hyper_witness", "lq_norm_gamma",
    "mehler_factors", "op_norm", "permanent", "polar_factors", "q0_threshold",
    "x_extension",
]
__version__ = "0.1.0"
