"""Coding against a state-choosing jammer: capacities, limiting value curves, finite-n bounds and codes."""
__version__ = "0.1.0"

from .errors import CapExceededError, ConvergenceError, InvalidInputError, JamgameError, SolverError
from .channels import ChannelFamily, Dmc, GameInstance, load_family, message_count, mixed_channel, save_family
from .capacity import channel_capacity, compound_capacity, mixed_eps_capacity, subset_capacities
from .curves import L_of_R, U_of_R, build_curves, eps_capacity_compound, optimal_PV
from .fbl import achievability_bound, dual_converse, gap_report, split_achievability_bound, type_converse
from .codes import evaluate_code, feinstein_build, split_build
from .exact import (
    brute_det_upper_value, brute_lower_value, game_values, heuristic_stochastic_upper, lp_relax_value,
    verify_dual_certificate,
)
