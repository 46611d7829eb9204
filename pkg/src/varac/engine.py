"""Backend dispatch for the sampling-heavy loops.

``backend="numba"`` runs the fused kernels in :mod:`varac._kernels`;
``backend="numpy"`` composes the public per-episode operations
(:func:`simulate_episode`, :func:`critic_update`,
:func:`actor_gradient_estimate`, :func:`actor_step`). Both draw the same
uniforms from the generator in the same order. ``None`` picks the default
from the environment (see :mod:`varac._accel`).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._accel import resolve_backend
from .actor import StepSchedule, actor_gradient_estimate, actor_step
from .critic import CriticState, critic_increment, critic_update, episode_features
from .errors import DivergenceError, NonProperPolicyError
from .features import FeatureMap
from .mdp import MAX_EPISODE_STEPS, MdpModel, SoftmaxPolicy, cdf_table, discounted_return, simulate_episode


@dataclass(frozen=True, eq=False)
class TrainTrace:
    """Snapshots taken after episodes ``episode[k]`` (1-based counts)."""

    episode: np.ndarray
    theta: np.ndarray
    w_J: np.ndarray
    w_M: np.ndarray
    w_tilde_J: np.ndarray
    J0: np.ndarray
    clamps: np.ndarray

    def critic(self, k: int = -1) -> CriticState:
        return CriticState(self.w_J[k], self.w_M[k], self.w_tilde_J[k], self.J0[k], int(self.episode[k]))


@dataclass(frozen=True, eq=False)
class EpisodeStats:
    returns: np.ndarray
    lengths: np.ndarray
    visit_mean: np.ndarray
    visit_se: np.ndarray
    weighted_visit_mean: np.ndarray
    weighted_visit_se: np.ndarray


def _raise_for(status: int, episode: int, max_steps: int, alpha=None):
    if status == _kernels.NON_PROPER:
        raise NonProperPolicyError(f"non-proper policy suspected: episode {episode} exceeded "
                                   f"max_episode_steps={max_steps}")
    if status == _kernels.CRITIC_DIVERGED:
        raise DivergenceError(f"critic weights became non-finite at episode {episode}"
                              + (f" (alpha={alpha:.3g})" if alpha is not None else "")
                              + "; reduce the critic step size")
    if status == _kernels.ACTOR_DIVERGED:
        raise DivergenceError(f"non-finite policy-gradient estimate at episode {episode}")


def _extra(fmap: FeatureMap, model: MdpModel) -> np.ndarray:
    return np.ascontiguousarray(fmap.extra_table(model.n_states, model.n_actions, model.terminal))


def _mean_se(total, total_sq, n):
    mean = total / n
    var = np.maximum(total_sq / n - mean ** 2, 0.0) * n / max(n - 1, 1)
    return mean, np.sqrt(var / n)


def train(model: MdpModel, policy: SoftmaxPolicy, map_J: FeatureMap, map_M: FeatureMap, mu: float,
          schedule: StepSchedule, episodes: int, rng: np.random.Generator, *, eval_every: int = 1,
          theta_max: float | None = 15.0, max_steps: int = MAX_EPISODE_STEPS, update_actor: bool = True,
          critic0: CriticState | None = None, backend: str | None = None) -> TrainTrace:
    """Run the actor-critic recursion for ``episodes`` episodes starting from ``policy.theta``."""
    if episodes < 1 or eval_every < 1:
        raise ValueError("episodes and eval_every must be positive")
    critic0 = CriticState.zeros(map_J.dim, map_M.dim) if critic0 is None else critic0
    if resolve_backend(backend) == "numba":
        out = _kernels.train_loop(
            rng, policy.theta.copy(), policy.index, model.initial, model.terminal, model.reward,
            cdf_table(model.transition), _extra(map_J, model), _extra(map_M, model),
            critic0.w_J.copy(), critic0.w_M.copy(), critic0.w_tilde_J.copy(), critic0.J0, float(mu),
            schedule.c_alpha, schedule.e_alpha, schedule.offset_alpha,
            schedule.c_beta, schedule.e_beta, schedule.offset_beta,
            episodes, eval_every, np.inf if theta_max is None else float(theta_max), max_steps, update_actor)
        status, fail_at, *arrays = out
        if status != _kernels.OK:
            _raise_for(status, fail_at, max_steps, float(schedule.alpha(fail_at)))
        return TrainTrace(*arrays)
    return _train_numpy(model, policy, map_J, map_M, mu, schedule, episodes, rng, eval_every,
                        theta_max, max_steps, update_actor, critic0)


def _train_numpy(model, policy, map_J, map_M, mu, schedule, episodes, rng, eval_every,
                 theta_max, max_steps, update_actor, critic):
    p_cdf = cdf_table(model.transition)
    theta = policy.theta.copy()
    records = []
    clamps = 0
    for i in range(episodes):
        pol = policy.with_theta(theta)
        pi = pol.probs()
        try:
            traj = simulate_episode(model, pol, rng, max_steps, _pi_cdf=cdf_table(pi), _p_cdf=p_cdf)
        except NonProperPolicyError:
            _raise_for(_kernels.NON_PROPER, i, max_steps)
        ep = episode_features(traj, map_J, map_M, pol, pi)
        if update_actor:
            g = actor_gradient_estimate(traj, critic, map_J, map_M, pol, mu, ep=ep)
        critic = critic_update(critic, traj, map_J, map_M, pol, float(schedule.alpha(i)), ep=ep)
        if update_actor:
            try:
                theta, clamped = actor_step(theta, g, float(schedule.beta(i)), theta_max)
            except DivergenceError:
                _raise_for(_kernels.ACTOR_DIVERGED, i, max_steps)
            clamps += clamped
        if (i + 1) % eval_every == 0 or i == episodes - 1:
            records.append((i + 1, theta.copy(), critic.w_J, critic.w_M, critic.w_tilde_J, critic.J0, clamps))
            clamps = 0
    cols = list(zip(*records))
    return TrainTrace(np.array(cols[0], dtype=np.int64), np.array(cols[1]).reshape(len(records), -1),
                      np.array(cols[2]).reshape(len(records), -1), np.array(cols[3]).reshape(len(records), -1),
                      np.array(cols[4]).reshape(len(records), -1), np.array(cols[5]),
                      np.array(cols[6], dtype=np.int64))


def actor_estimates(model: MdpModel, policy: SoftmaxPolicy, critic: CriticState, map_J: FeatureMap,
                    map_M: FeatureMap, mu: float, n_episodes: int, rng: np.random.Generator, *,
                    max_steps: int = MAX_EPISODE_STEPS, backend: str | None = None) -> np.ndarray:
    """Independent single-trajectory gradient estimates at fixed theta, shape (N, n)."""
    pi = policy.probs()
    pi_cdf = cdf_table(pi)
    p_cdf = cdf_table(model.transition)
    if resolve_backend(backend) == "numba":
        status, out = _kernels.actor_estimates(
            rng, pi, pi_cdf, policy.index, model.initial, model.terminal, model.reward, p_cdf,
            _extra(map_J, model), _extra(map_M, model), critic.w_J, critic.w_M, critic.w_tilde_J,
            critic.J0, float(mu), n_episodes, max_steps)
        _raise_for(status, -1, max_steps)
        return out
    out = np.zeros((n_episodes, policy.n_params))
    for e in range(n_episodes):
        traj = simulate_episode(model, policy, rng, max_steps, _pi_cdf=pi_cdf, _p_cdf=p_cdf)
        ep = episode_features(traj, map_J, map_M, policy, pi)
        out[e] = actor_gradient_estimate(traj, critic, map_J, map_M, policy, mu, ep=ep)
    return out


def critic_increments(model: MdpModel, policy: SoftmaxPolicy, critic: CriticState, map_J: FeatureMap,
                      map_M: FeatureMap, n_episodes: int, rng: np.random.Generator, *,
                      max_steps: int = MAX_EPISODE_STEPS, backend: str | None = None):
    """Per-episode critic increments at fixed weights: (dJ, dM, dT, dJ0) arrays."""
    pi = policy.probs()
    pi_cdf = cdf_table(pi)
    p_cdf = cdf_table(model.transition)
    dj, dm = map_J.dim, map_M.dim
    if resolve_backend(backend) == "numba":
        status, out = _kernels.critic_increments(
            rng, pi, pi_cdf, policy.index, model.initial, model.terminal, model.reward, p_cdf,
            _extra(map_J, model), _extra(map_M, model), critic.w_J, critic.w_M, critic.w_tilde_J,
            critic.J0, n_episodes, max_steps)
        _raise_for(status, -1, max_steps)
    else:
        out = np.zeros((n_episodes, 2 * dj + dm + 1))
        for e in range(n_episodes):
            traj = simulate_episode(model, policy, rng, max_steps, _pi_cdf=pi_cdf, _p_cdf=p_cdf)
            out[e] = critic_increment(critic, episode_features(traj, map_J, map_M, policy, pi)).as_vector()
    return out[:, :dj], out[:, dj:dj + dm], out[:, dj + dm:2 * dj + dm], out[:, -1]


def episode_stats(model: MdpModel, policy: SoftmaxPolicy, n_episodes: int, rng: np.random.Generator, *,
                  max_steps: int = MAX_EPISODE_STEPS, backend: str | None = None) -> EpisodeStats:
    """Monte Carlo returns, visit counts and prefix-reward-weighted visit counts."""
    pi_cdf = cdf_table(policy.probs())
    p_cdf = cdf_table(model.transition)
    if resolve_backend(backend) == "numba":
        status, returns, lengths, v_sum, v_sq, w_sum, w_sq = _kernels.episode_stats(
            rng, pi_cdf, model.initial, model.terminal, model.reward, p_cdf, n_episodes, max_steps)
        _raise_for(status, -1, max_steps)
    else:
        shape = (model.n_states, model.n_actions)
        returns = np.zeros(n_episodes)
        lengths = np.zeros(n_episodes, dtype=np.int64)
        v_sum, v_sq, w_sum, w_sq = (np.zeros(shape) for _ in range(4))
        for e in range(n_episodes):
            traj = simulate_episode(model, policy, rng, max_steps, _pi_cdf=pi_cdf, _p_cdf=p_cdf)
            sums = discounted_return(traj, 1.0)
            returns[e] = sums.total
            lengths[e] = traj.tau
            visits = np.zeros(shape)
            weighted = np.zeros(shape)
            np.add.at(visits, (traj.states, traj.actions), 1.0)
            np.add.at(weighted, (traj.states, traj.actions), sums.prefix)
            v_sum += visits
            v_sq += visits ** 2
            w_sum += weighted
            w_sq += weighted ** 2
    vm, vse = _mean_se(v_sum, v_sq, n_episodes)
    wm, wse = _mean_se(w_sum, w_sq, n_episodes)
    return EpisodeStats(returns, lengths, vm, vse, wm, wse)
