"""Coordinated multicell downlink beamforming simulator.

Weighted sum-rate maximization across a small cluster of multi-antenna base
stations sharing OFDMA subchannels, solved by KKT fixed-point iteration
(ICBF), its inverse-free variant (ICBF-WI) and the reference-user
approximation (CB-REFIM), with channel modeling and a Monte-Carlo experiment
harness.
"""
from .config import NetworkConfig, parse_config_file
from .errors import (BracketError, CbsimError, ConfigurationError,
                     DegenerateChannelError, InvalidStateError, UsageError)
from .experiments import ExperimentSpec, run_experiment
from .initializers import init_cm, init_mslnr, init_zf, make_initial_beams
from .metrics import (RateReport, bs_power, bs_powers, per_user_rate_samples,
                      power_feasible, rate_report, sinr, slnr,
                      weighted_sum_rate)
from .network import (ChannelState, Topology, build_topology, compute_noise,
                      draw_channels, normalize_channels, realize_network)
from .refim import (feedback_bits, invert_rank_r, leakage_refim,
                    reference_map, select_references)
from .solver import (KKTReport, Leakage, SolverTrace, beta, gamma_direct,
                     gamma_sherman_morrison, interference, kkt_report,
                     lambda_bisection, leakage_full, solve, update_beams)

__all__ = [
    "NetworkConfig", "parse_config_file",
    "CbsimError", "ConfigurationError", "UsageError", "DegenerateChannelError",
    "InvalidStateError", "BracketError",
    "ExperimentSpec", "run_experiment",
    "init_cm", "init_zf", "init_mslnr", "make_initial_beams",
    "RateReport", "sinr", "slnr", "weighted_sum_rate", "bs_power", "bs_powers",
    "power_feasible", "rate_report", "per_user_rate_samples",
    "Topology", "ChannelState", "build_topology", "draw_channels",
    "compute_noise", "normalize_channels", "realize_network",
    "select_references", "reference_map", "leakage_refim", "invert_rank_r",
    "feedback_bits",
    "Leakage", "SolverTrace", "KKTReport", "leakage_full", "gamma_direct",
    "gamma_sherman_morrison", "beta", "interference", "lambda_bisection",
    "update_beams", "solve", "kkt_report",
]

__version__ = "0.1.0"
