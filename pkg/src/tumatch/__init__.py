"""Simulation and estimation of bipartite matching markets with transferable utility."""

__version__ = "0.1.0"

from .assignment import FiniteMatching, brute_force_matching, solve_assignment, type_level_duals
from .core import (
    FiniteMarket,
    Margins,
    MatchingPatterns,
    TypeSpace,
    aggregate_matching,
    supermodular_core,
    surplus_mean_variance,
)
from .estimation import (
    MinDistanceResult,
    MinDistanceSpec,
    min_distance,
    odds_ratio_phi0,
    phi0_avar,
    phi_closed_form,
    phi_covariance,
    phi_no_singles,
)
from .ipfp import choo_siow_residual, choo_siow_utilities, ipfp_solve
from .stochastic import NoiseSpec, build_finite_market, draw_gumbel_centered, sigma_tau_from_r2

__all__ = [
    "FiniteMarket",
    "FiniteMatching",
    "Margins",
    "MatchingPatterns",
    "MinDistanceResult",
    "MinDistanceSpec",
    "NoiseSpec",
    "TypeSpace",
    "aggregate_matching",
    "brute_force_matching",
    "build_finite_market",
    "choo_siow_residual",
    "choo_siow_utilities",
    "draw_gumbel_centered",
    "ipfp_solve",
    "min_distance",
    "odds_ratio_phi0",
    "phi0_avar",
    "phi_closed_form",
    "phi_covariance",
    "phi_no_singles",
    "sigma_tau_from_r2",
    "solve_assignment",
    "supermodular_core",
    "surplus_mean_variance",
    "type_level_duals",
]
