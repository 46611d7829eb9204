"""Variance-adjusted policy-gradient estimate and the actor step."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .critic import CriticState, EpisodeFeatures, episode_features
from .errors import ContractViolation, DivergenceError
from .features import FeatureMap
from .mdp import SoftmaxPolicy, Trajectory

log = logging.getLogger(__name__)

THETA_MAX = 15.0


@dataclass(frozen=True)
class StepSchedule:
    """Power-law step sizes alpha_i = c_alpha / (i + offset_alpha)^e_alpha, same for beta.

    The critic (alpha) runs on the fast timescale and the actor (beta) on the
    slow one. With 0.5 < e_alpha < e_beta <= 1 both sequences are
    non-summable, square-summable and beta_i / alpha_i -> 0.
    """

    c_alpha: float = 0.3
    c_beta: float = 1.5
    e_alpha: float = 0.7
    e_beta: float = 1.0
    offset_alpha: float = 1.0
    offset_beta: float = 100.0
    kind: str = "power"

    def alpha(self, i):
        return self.c_alpha / (np.asarray(i, dtype=np.float64) + self.offset_alpha) ** self.e_alpha

    def beta(self, i):
        return self.c_beta / (np.asarray(i, dtype=np.float64) + self.offset_beta) ** self.e_beta

    def problems(self) -> list[str]:
        out = []
        if self.kind != "power":
            out.append(f"unsupported schedule kind {self.kind!r}")
        if self.c_alpha <= 0 or self.c_beta <= 0:
            out.append("schedule constants must be positive")
        if self.offset_alpha < 1 or self.offset_beta < 1:
            out.append("schedule offsets must be >= 1")
        if not 0.5 < self.e_alpha < self.e_beta <= 1.0:
            out.append(f"exponents must satisfy 0.5 < e_alpha < e_beta <= 1 "
                       f"(got {self.e_alpha}, {self.e_beta})")
        return out


def actor_gradient_estimate(traj: Trajectory, critic: CriticState, map_J: FeatureMap, map_M: FeatureMap,
                            policy: SoftmaxPolicy, mu: float, *,
                            ep: EpisodeFeatures | None = None) -> np.ndarray:
    """Single-trajectory estimate of grad eta from compatible critics.

    sum_t psi_t [J_t - mu (M_t + 2 C_t Jw_t - 2 J0 J_t)] with J_t = phi_J.w_J,
    M_t = phi_M.w_M, Jw_t = phi_J.w_tilde_J and C_t the reward collected
    before step t. At the critic fixed point its mean is exactly grad eta.
    """
    if critic.w_J.size != map_J.dim or critic.w_M.size != map_M.dim or critic.w_tilde_J.size != map_J.dim:
        raise ContractViolation("critic weights do not match feature dimensions")
    if ep is None:
        ep = episode_features(traj, map_J, map_M, policy)
    psi = ep.phi_J[:, :policy.n_params]
    J_t = ep.phi_J @ critic.w_J
    M_t = ep.phi_M @ critic.w_M
    Jw_t = ep.phi_J @ critic.w_tilde_J
    weight = J_t - mu * (M_t + 2.0 * ep.prefix * Jw_t - 2.0 * critic.J0 * J_t)
    return psi.T @ weight


def actor_step(theta: np.ndarray, grad_estimate: np.ndarray, beta: float,
               theta_max: float | None = THETA_MAX) -> tuple[np.ndarray, bool]:
    """theta + beta * grad, clipped to [-theta_max, theta_max]. Returns (theta, clamped)."""
    if beta <= 0:
        raise ContractViolation("actor step size must be positive")
    grad_estimate = np.asarray(grad_estimate, dtype=np.float64)
    if not np.all(np.isfinite(grad_estimate)):
        raise DivergenceError("non-finite policy-gradient estimate; critic weights have diverged")
    new = np.asarray(theta, dtype=np.float64) + beta * grad_estimate
    clamped = False
    if theta_max is not None and np.any(np.abs(new) > theta_max):
        clamped = True
        log.info("theta clamped to +/-%g (max |theta| was %.4g)", theta_max, np.max(np.abs(new)))
        new = np.clip(new, -theta_max, theta_max)
    return new, clamped


@dataclass(frozen=True, eq=False)
class UnbiasednessReport:
    mean: np.ndarray
    stderr: np.ndarray
    exact: np.ndarray
    n_episodes: int

    @property
    def z(self) -> np.ndarray:
        diff = self.mean - self.exact
        with np.errstate(divide="ignore", invalid="ignore"):
            z = diff / self.stderr
        # zero standard error: the estimator is deterministic and must match exactly
        exact_match = np.abs(diff) <= 1e-9 * np.maximum(1.0, np.abs(self.exact))
        return np.where(self.stderr > 0, z, np.where(exact_match, 0.0, np.inf))

    @property
    def passed(self) -> bool:
        return bool(np.all(np.abs(self.z) < 3.0))


def unbiasedness_check(model, policy: SoftmaxPolicy, mu: float, n_episodes: int, seed: int = 0,
                       map_J: FeatureMap | None = None, map_M: FeatureMap | None = None,
                       backend: str | None = None) -> UnbiasednessReport:
    """Average the single-trajectory estimate with the critic pinned at its fixed point."""
    from . import engine, oracle
    from .features import compatible_features

    map_J = compatible_features(policy) if map_J is None else map_J
    map_M = compatible_features(policy) if map_M is None else map_M
    critic = oracle.critic_fixed_point(model, policy, map_J, map_M)
    est = engine.actor_estimates(model, policy, critic, map_J, map_M, mu, n_episodes,
                                 np.random.default_rng(seed), backend=backend)
    exact = oracle.exact_gradient(model, policy, mu).grad_eta
    return UnbiasednessReport(est.mean(axis=0), est.std(axis=0, ddof=1) / np.sqrt(n_episodes),
                              exact, n_episodes)
