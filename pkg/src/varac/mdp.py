"""Episodic MDP model, tabular softmax policy and episode simulation.

States and actions are addressed by integer index everywhere inside the
package; names are kept on the model for file I/O and reports.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ContractViolation, NonProperPolicyError

MAX_EPISODE_STEPS = 100_000
STOCHASTIC_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class MdpModel:
    """Finite episodic MDP with state-dependent reward.

    ``transition[x, u, y]`` is P(y | x, u). The row block of the terminal
    state is ignored (it is absorbing and never sampled).
    """

    states: tuple[str, ...]
    actions: tuple[str, ...]
    transition: np.ndarray
    reward: np.ndarray
    initial: int
    terminal: int
    gamma: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "actions", tuple(self.actions))
        P = np.array(self.transition, dtype=np.float64)
        r = np.array(self.reward, dtype=np.float64)
        P.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "reward", r)
        S, A = len(self.states), len(self.actions)
        if P.shape != (S, A, S):
            raise ContractViolation(f"transition has shape {P.shape}, expected {(S, A, S)}")
        if r.shape != (S,):
            raise ContractViolation(f"reward has shape {r.shape}, expected {(S,)}")
        if not (0 <= self.initial < S and 0 <= self.terminal < S):
            raise ContractViolation("initial/terminal index out of range")

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @property
    def nonterminal(self) -> np.ndarray:
        return np.array([x for x in range(self.n_states) if x != self.terminal], dtype=np.int64)

    def state_index(self, name: str) -> int:
        return self.states.index(name)

    def action_index(self, name: str) -> int:
        return self.actions.index(name)

    def with_reward_baseline(self, b: float) -> "MdpModel":
        """Copy with ``b`` added to every nonterminal reward."""
        r = self.reward.copy()
        r[self.nonterminal] += b
        return MdpModel(self.states, self.actions, self.transition, r,
                        self.initial, self.terminal, self.gamma)

    def with_gamma(self, gamma: float) -> "MdpModel":
        return MdpModel(self.states, self.actions, self.transition, self.reward,
                        self.initial, self.terminal, gamma)


def _reachable(adj: np.ndarray, start: int) -> set[int]:
    seen = {start}
    queue = deque([start])
    while queue:
        x = queue.popleft()
        for y in np.flatnonzero(adj[x]):
            if y not in seen:
                seen.add(int(y))
                queue.append(int(y))
    return seen


def validate_model(model: MdpModel, tol: float = STOCHASTIC_TOL) -> list[str]:
    """Return a list of violations; an empty list means the model is usable.

    Properness is checked under the uniform policy: every nonterminal state
    must be reachable from the initial state and the terminal state reachable
    from every state. Since softmax policies share the uniform policy's
    support, this covers every finite parameter vector.
    """
    problems = []
    P, r = model.transition, model.reward
    x_star = model.terminal
    if not 0.0 < model.gamma <= 1.0:
        problems.append(f"discount {model.gamma} outside (0, 1]")
    if model.initial == x_star:
        problems.append("initial state equals terminal state")
    if not np.all(np.isfinite(r)):
        problems.append("non-finite reward")
    if r[x_star] != 0.0:
        problems.append(f"nonzero reward {r[x_star]} at terminal state {model.states[x_star]}")
    for x in model.nonterminal:
        for u in range(model.n_actions):
            row = P[x, u]
            if np.any(row < 0) or not np.all(np.isfinite(row)):
                problems.append(f"negative or non-finite probability at "
                                f"({model.states[x]},{model.actions[u]})")
            if abs(row.sum() - 1.0) > tol:
                problems.append(f"row not stochastic at ({model.states[x]},{model.actions[u]}): "
                                f"sums to {row.sum():.12g}")
    if problems:
        return problems

    adj = P.sum(axis=1) > 0
    adj[x_star] = False
    seen = _reachable(adj, model.initial)
    for x in model.nonterminal:
        if x not in seen:
            problems.append(f"state {model.states[x]} unreachable from {model.states[model.initial]}")
    back = _reachable(adj.T, x_star)
    for x in model.nonterminal:
        if x not in back:
            problems.append(f"terminal state unreachable from {model.states[x]}")
    return problems


@dataclass(frozen=True, eq=False)
class SoftmaxPolicy:
    """Tabular softmax with one pinned zero logit per state.

    ``index[x, u]`` is the parameter index of the logit of ``u`` at ``x``,
    or -1 where the logit is fixed to 0 (reference actions and every entry
    of the terminal row). Passing ``reference=None`` to :meth:`tabular`
    builds the over-parameterised variant without reference actions.
    """

    theta: np.ndarray
    index: np.ndarray
    terminal: int

    def __post_init__(self):
        theta = np.array(self.theta, dtype=np.float64).reshape(-1)
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        index = np.asarray(self.index, dtype=np.int64)
        if theta.size != index.max(initial=-1) + 1:
            raise ContractViolation(f"theta has {theta.size} entries, layout needs {index.max(initial=-1) + 1}")
        object.__setattr__(self, "index", index)

    @classmethod
    def tabular(cls, model: MdpModel, theta=None, reference: int | None = -1) -> "SoftmaxPolicy":
        S, A = model.n_states, model.n_actions
        index = -np.ones((S, A), dtype=np.int64)
        ref = None if reference is None else reference % A
        k = 0
        for x in model.nonterminal:
            for u in range(A):
                if u != ref:
                    index[x, u] = k
                    k += 1
        theta = np.zeros(k) if theta is None else theta
        return cls(theta, index, model.terminal)

    @property
    def n_params(self) -> int:
        return self.theta.size

    def with_theta(self, theta) -> "SoftmaxPolicy":
        return SoftmaxPolicy(theta, self.index, self.terminal)

    def logits(self) -> np.ndarray:
        z = np.zeros(self.index.shape)
        mask = self.index >= 0
        z[mask] = self.theta[self.index[mask]]
        return z

    def probs(self) -> np.ndarray:
        """(S, A) table of action probabilities; the terminal row is zero."""
        z = self.logits()
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        pi = e / e.sum(axis=1, keepdims=True)
        pi[self.terminal] = 0.0
        return pi

    def score_rows(self, states: np.ndarray, actions: np.ndarray, probs=None) -> np.ndarray:
        """Score vectors grad log pi(u|x) for a batch of pairs, shape (len, n)."""
        states = np.asarray(states, dtype=np.int64)
        actions = np.asarray(actions, dtype=np.int64)
        pi = self.probs() if probs is None else probs
        A = pi.shape[1]
        idx = self.index[states]
        vals = (actions[:, None] == np.arange(A)).astype(np.float64) - pi[states]
        out = np.zeros((states.size, self.n_params))
        rows, cols = np.nonzero(idx >= 0)
        out[rows, idx[rows, cols]] = vals[rows, cols]
        out[states == self.terminal] = 0.0
        return out

    def score_table(self) -> np.ndarray:
        """(S, A, n) table of grad log pi; zero at the terminal state."""
        S, A = self.index.shape
        xs, us = np.divmod(np.arange(S * A), A)
        return self.score_rows(xs, us).reshape(S, A, self.n_params)


def _check_nonterminal(policy: SoftmaxPolicy, x: int):
    if x == policy.terminal:
        raise ContractViolation("policy is undefined at the terminal state")


def action_distribution(policy: SoftmaxPolicy, x: int) -> np.ndarray:
    _check_nonterminal(policy, x)
    return policy.probs()[x]


def score(policy: SoftmaxPolicy, x: int, u: int) -> np.ndarray:
    """grad_theta log pi(u | x).

    Component (x', u') is 1{x = x'} (1{u = u'} - pi(u' | x)); reference
    actions carry no component.
    """
    _check_nonterminal(policy, x)
    pi = policy.probs()[x]
    out = np.zeros(policy.n_params)
    for v, j in enumerate(policy.index[x]):
        if j >= 0:
            out[j] = float(u == v) - pi[v]
    return out


def cdf_table(probs: np.ndarray) -> np.ndarray:
    """Cumulative sums along the last axis, pinned to exactly 1 from the last
    positive entry on, so inverse-CDF sampling never returns a zero-probability
    outcome through rounding."""
    cdf = np.cumsum(probs, axis=-1)
    flat_p = probs.reshape(-1, probs.shape[-1])
    flat_c = cdf.reshape(-1, probs.shape[-1])
    for row_p, row_c in zip(flat_p, flat_c):
        pos = np.flatnonzero(row_p > 0)
        if pos.size:
            row_c[pos[-1]:] = 1.0
    return cdf


def sample_index(cdf_row: np.ndarray, u: float) -> int:
    """First k with cdf_row[k] > u."""
    return min(int(np.searchsorted(cdf_row, u, side="right")), cdf_row.size - 1)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One episode x_0, u_0, ..., x_{tau-1}, u_{tau-1}; x_tau is terminal."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray

    def __post_init__(self):
        if len(self.states) == 0:
            raise ContractViolation("empty trajectory")
        if not len(self.states) == len(self.actions) == len(self.rewards):
            raise ContractViolation("trajectory arrays differ in length")

    @property
    def tau(self) -> int:
        return len(self.states)

    @property
    def steps(self) -> list[tuple[int, int, float]]:
        return list(zip(self.states.tolist(), self.actions.tolist(), self.rewards.tolist()))

    @classmethod
    def from_steps(cls, model: MdpModel, steps: Sequence[tuple[int, int]]) -> "Trajectory":
        s = np.array([x for x, _ in steps], dtype=np.int64)
        a = np.array([u for _, u in steps], dtype=np.int64)
        return cls(s, a, model.reward[s].copy())


def simulate_episode(model: MdpModel, policy: SoftmaxPolicy, rng: np.random.Generator,
                     max_steps: int = MAX_EPISODE_STEPS, *, _pi_cdf=None, _p_cdf=None) -> Trajectory:
    """Sample one episode from the initial state until absorption.

    Each step consumes exactly two uniforms from ``rng``: one for the action,
    then one for the successor state. The compiled kernels follow the same
    order, so both backends see identical trajectories for the same seed.
    """
    pi_cdf = cdf_table(policy.probs()) if _pi_cdf is None else _pi_cdf
    p_cdf = cdf_table(model.transition) if _p_cdf is None else _p_cdf
    states, actions = [], []
    x = model.initial
    x_star = model.terminal
    while True:
        if len(states) >= max_steps:
            raise NonProperPolicyError(
                f"non-proper policy suspected: episode exceeded max_episode_steps={max_steps}")
        u = sample_index(pi_cdf[x], rng.random())
        states.append(x)
        actions.append(u)
        x = sample_index(p_cdf[x, u], rng.random())
        if x == x_star:
            break
    s = np.array(states, dtype=np.int64)
    return Trajectory(s, np.array(actions, dtype=np.int64), model.reward[s].copy())


class ReturnSums(NamedTuple):
    total: float
    suffix: np.ndarray
    prefix: np.ndarray


def discounted_return(traj: Trajectory, gamma: float = 1.0) -> ReturnSums:
    """Return B plus per-step suffix returns and undiscounted prefix sums.

    ``suffix[t] = sum_{s>=t} gamma^(s-t) r_s`` and ``prefix[t] = sum_{s<t} r_s``.
    """
    r = traj.rewards
    suffix = np.empty_like(r)
    acc = 0.0
    for t in range(r.size - 1, -1, -1):
        acc = r[t] + gamma * acc
        suffix[t] = acc
    prefix = np.concatenate(([0.0], np.cumsum(r)[:-1]))
    return ReturnSums(float(suffix[0]), suffix, prefix)
