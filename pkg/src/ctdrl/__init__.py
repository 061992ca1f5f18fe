"""Continuous-time distributional RL toolkit.

Solves per-quantile HJB dynamics on a finite-difference lattice with
Sinkhorn-regularized JKO particle updates, alongside a discrete-time quantile
TD baseline and a closed-form oracle for the 1-D particle task.
"""
from .agents import AgentConfig, FdwgfAgent, QtdAgent, StatisticsTable, select_action
from .distributions import (WeightedParticleSet, cdf_at, extract_quantiles,
                            gaussian_quantiles, make_quantile_distribution, mean,
                            mixture, pushforward_affine, quantile_midpoints)
from .env import (V_MAX, V_MIN, EnvState, ItoDiffusionEnv, ToyEnvParams,
                  ToyParticleEnv, Transition, analytic_greedy_direction,
                  analytic_return_distribution, analytic_value, value_kink)
from .harness import ExperimentConfig, export_heatmap, load_config, run
from .jko import JkoConfig, jko_step, objective
from .lattice import (DegenerateModelError, Lattice, LatticeModel,
                      TransitionKernel, kernel_from_moments)
from .sinkhorn import TransportPlan, TransportProblem, grad_source, solve, value

__all__ = [
    "AgentConfig", "FdwgfAgent", "QtdAgent", "StatisticsTable", "select_action",
    "WeightedParticleSet", "cdf_at", "extract_quantiles", "gaussian_quantiles",
    "make_quantile_distribution", "mean", "mixture", "pushforward_affine",
    "quantile_midpoints", "V_MAX", "V_MIN", "EnvState", "ItoDiffusionEnv",
    "ToyEnvParams", "ToyParticleEnv", "Transition", "analytic_greedy_direction",
    "analytic_return_distribution", "analytic_value", "value_kink",
    "ExperimentConfig", "export_heatmap", "load_config", "run", "JkoConfig",
    "jko_step", "objective", "DegenerateModelError", "Lattice", "LatticeModel",
    "TransitionKernel", "kernel_from_moments", "TransportPlan",
    "TransportProblem", "grad_source", "solve", "value",
]
