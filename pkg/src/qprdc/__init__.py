"""Quantization-tree pricing of European and Bermudan PRDC options in a three-factor FX model."""

from .closed_form import european_call, european_prdc, mu_sigma
from .gaussian import (Correlation, bivar_cdf, bivar_rect_prob, gauss_cell_moments, norm_cdf,
                       norm_inv_cdf)
from .kernels import BACKEND_NAME
from .mc import McEstimate, mc_european, mc_transition_row
from .model import (InitialCurve, ModelParams, increment_cov, phi_d, phi_f, simulate_states,
                    spot_from_state, state_cov)
from .payoff import ProductSpec, call_decomposition, obstacle_h, prdc_payoff
from .pricer import PriceResult, european_cubature, exercise_boundary, price_bermudan
from .quantizer import Grid1D, build_std_grid, distortion_of, load_grid, rescale, save_grid
from .tree import (GridSizes, McConfig, Mode, QuantTree, TransitionMatrix, allocate_sizes,
                   build_tree, transitions_2d, transitions_4d)

__version__ = "0.1.0"

__all__ = [
    "BACKEND_NAME", "Correlation", "Grid1D", "GridSizes", "InitialCurve", "McConfig",
    "McEstimate", "Mode", "ModelParams", "PriceResult", "ProductSpec", "QuantTree",
    "TransitionMatrix", "allocate_sizes", "bivar_cdf", "bivar_rect_prob", "build_std_grid",
    "build_tree", "call_decomposition", "distortion_of", "european_call", "european_cubature",
    "european_prdc", "exercise_boundary", "gauss_cell_moments", "increment_cov", "load_grid",
    "mc_european", "mc_transition_row", "mu_sigma", "norm_cdf", "norm_inv_cdf", "obstacle_h",
    "phi_d", "phi_f", "prdc_payoff", "price_bermudan", "rescale", "save_grid",
    "simulate_states", "spot_from_state", "state_cov", "transitions_2d", "transitions_4d",
]
