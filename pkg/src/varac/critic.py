"""Episodic Monte Carlo critic.

After every episode the critic moves three linear weight vectors towards
least-squares fits of the observed returns: w_J fits the return-to-go G_t,
w_M fits G_t^2, and w_tilde_J fits G_t with each step weighted by the
reward collected before it (C_t). J0 tracks the mean episode return.
Residuals use the weights held at the start of the episode.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, DivergenceError
from .features import FeatureMap
from .mdp import SoftmaxPolicy, Trajectory, discounted_return


@dataclass(frozen=True, eq=False)
class CriticState:
    w_J: np.ndarray
    w_M: np.ndarray
    w_tilde_J: np.ndarray
    J0: float = 0.0
    episode_index: int = 0

    def __post_init__(self):
        for name in ("w_J", "w_M", "w_tilde_J"):
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=np.float64).reshape(-1))
        object.__setattr__(self, "J0", float(self.J0))

    @classmethod
    def zeros(cls, dim_J: int, dim_M: int) -> "CriticState":
        return cls(np.zeros(dim_J), np.zeros(dim_M), np.zeros(dim_J), 0.0, 0)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.w_J, self.w_M, self.w_tilde_J, [self.J0]])

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.as_vector())))


@dataclass(frozen=True, eq=False)
class EpisodeFeatures:
    """Per-step features and return sums of one trajectory."""

    phi_J: np.ndarray  # (tau, dim_J)
    phi_M: np.ndarray  # (tau, dim_M)
    suffix: np.ndarray  # G_t
    prefix: np.ndarray  # C_t
    total: float


def episode_features(traj: Trajectory, map_J: FeatureMap, map_M: FeatureMap,
                     policy: SoftmaxPolicy, probs=None) -> EpisodeFeatures:
    pi = policy.probs() if probs is None else probs
    sums = discounted_return(traj, 1.0)
    return EpisodeFeatures(map_J.rows(policy, traj.states, traj.actions, pi),
                           map_M.rows(policy, traj.states, traj.actions, pi),
                           sums.suffix, sums.prefix, sums.total)


def _check_dims(state: CriticState, map_J: FeatureMap, map_M: FeatureMap):
    if state.w_J.size != map_J.dim or state.w_tilde_J.size != map_J.dim:
        raise ContractViolation(f"w_J has {state.w_J.size} entries, phi_J has {map_J.dim}")
    if state.w_M.size != map_M.dim:
        raise ContractViolation(f"w_M has {state.w_M.size} entries, phi_M has {map_M.dim}")


def critic_increment(state: CriticState, ep: EpisodeFeatures) -> CriticState:
    """The bracketed sums of one critic update (step size 1, no accumulation)."""
    G, C = ep.suffix, ep.prefix
    dJ = ep.phi_J.T @ (G - ep.phi_J @ state.w_J)
    dM = ep.phi_M.T @ (G * G - ep.phi_M @ state.w_M)
    dT = ep.phi_J.T @ (C * (G - ep.phi_J @ state.w_tilde_J))
    return CriticState(dJ, dM, dT, ep.total - state.J0)


def critic_update(state: CriticState, traj: Trajectory, map_J: FeatureMap, map_M: FeatureMap,
                  policy: SoftmaxPolicy, alpha: float, *, ep: EpisodeFeatures | None = None) -> CriticState:
    """One episodic step of size ``alpha``; returns the new state."""
    if alpha <= 0:
        raise ContractViolation("critic step size must be positive")
    _check_dims(state, map_J, map_M)
    ep = episode_features(traj, map_J, map_M, policy) if ep is None else ep
    with np.errstate(over="ignore", invalid="ignore"):
        inc = critic_increment(state, ep)
        new = CriticState(state.w_J + alpha * inc.w_J,
                          state.w_M + alpha * inc.w_M,
                          state.w_tilde_J + alpha * inc.w_tilde_J,
                          state.J0 + alpha * inc.J0,
                          state.episode_index + 1)
    if not new.is_finite():
        raise DivergenceError(f"critic weights became non-finite at episode {state.episode_index} "
                              f"(alpha={alpha:.3g}); reduce the critic step size")
    return new


def critic_fixed_point_gap(state: CriticState, target: CriticState) -> float:
    """Max-norm distance between all critic parameters and ``target``."""
    diff = state.as_vector() - target.as_vector()
    return float(np.max(np.abs(diff))) if diff.size else 0.0
