"""Coordinated multicell MISO downlink beamforming: max-min SINR balancing
with Pareto improvement, its distributed scalar-exchange counterpart, and
reference schemes, plus a Monte-Carlo experiment harness.
"""

from .baselines import RatePoint, ne_solution, nbs_solution, pareto_boundary_2user, sginr_solution
from .centralized import BalancingConfig, SolveOutcome, pareto_improve, solve_max_min, two_step
from .distributed import DistributedConfig, finalize_downlink, run_to_convergence, solve_distributed
from .harness import ExperimentSpec, run_experiment
from .scenario import CsiErrorConfig, TopologyConfig, generate_drop, perturb_csi
from .system_model import ChannelSet, downlink_sinr, uplink_sinr, user_rate

__version__ = "0.1.0"

__all__ = [
    "BalancingConfig",
    "ChannelSet",
    "CsiErrorConfig",
    "DistributedConfig",
    "ExperimentSpec",
    "RatePoint",
    "TopologyConfig",
    "SolveOutcome",
    "downlink_sinr",
    "finalize_downlink",
    "generate_drop",
    "nbs_solution",
    "ne_solution",
    "pareto_boundary_2user",
    "pareto_improve",
    "perturb_csi",
    "run_experiment",
    "run_to_convergence",
    "sginr_solution",
    "solve_distributed",
    "solve_max_min",
    "two_step",
    "uplink_sinr",
    "user_rate",
]
