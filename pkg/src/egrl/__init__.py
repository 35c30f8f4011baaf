"""Memory-placement search for neural network accelerators.

Evolutionary search, a graph-network soft actor-critic learner and their
combination, all scored on a simulated three-level memory hierarchy.
"""

from .config import ConfigError, RunConfig, desk_config
from .env import MappingEnv
from .hwsim import (
    DRAM,
    LLC,
    SRAM,
    EvalResult,
    HardwareModel,
    MappingDecision,
    baseline_latency,
    check_capacity,
    compiler_map,
    compute_reward,
    rectify,
    simulate_latency,
)
from .workload import WorkloadGraph, feature_matrix, generate_synthetic, load_workload, save_workload

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DRAM",
    "EvalResult",
    "HardwareModel",
    "LLC",
    "MappingDecision",
    "MappingEnv",
    "RunConfig",
    "SRAM",
    "WorkloadGraph",
    "baseline_latency",
    "check_capacity",
    "compiler_map",
    "compute_reward",
    "desk_config",
    "feature_matrix",
    "generate_synthetic",
    "load_workload",
    "rectify",
    "save_workload",
    "simulate_latency",
]
