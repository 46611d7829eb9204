"""Variance-adjusted episodic actor-critic with exact linear-algebra oracles."""
from .actor import StepSchedule, actor_gradient_estimate, actor_step, unbiasedness_check
from .critic import CriticState, critic_fixed_point_gap, critic_update
from .features import FeatureMap, check_rank, compatible_features
from .mdp import (MdpModel, SoftmaxPolicy, Trajectory, action_distribution, discounted_return, score,
                  simulate_episode, validate_model)
from .models import chain3, geo, load_model, random_mdp

__all__ = [
    "CriticState", "FeatureMap", "MdpModel", "SoftmaxPolicy", "StepSchedule", "Trajectory",
    "action_distribution", "actor_gradient_estimate", "actor_step", "chain3", "check_rank",
    "compatible_features", "critic_fixed_point_gap", "critic_update", "discounted_return", "geo",
    "load_model", "random_mdp", "score", "simulate_episode", "unbiasedness_check", "validate_model",
]
__version__ = "0.1.0"
