"""Exact policy evaluation and policy gradients by dense linear algebra.

Everything here is ground truth for the sampling-based estimators: value
J, second moment M and variance V of the return, the visit-count occupancy
q and its reward-weighted variant q~, least-squares projections onto the
feature spaces, and the gradient of eta = J(x0) - mu V(x0).

Occupancies are expected visit counts (not normalised). Gradient formulas
assume an undiscounted model; J, M and V also accept gamma < 1.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .critic import CriticState
from .errors import ContractViolation, NonProperPolicyError, ProjectionError
from .features import FeatureMap
from .mdp import MdpModel, SoftmaxPolicy

_COND_LIMIT = 1e13


class OccupancyWarning(UserWarning):
    """The reward-weighted occupancy has non-positive entries."""


class Values(NamedTuple):
    state: np.ndarray  # (S,), zero at the terminal state
    sa: np.ndarray  # (S, A), zero row at the terminal state


def policy_transition(model: MdpModel, pi: np.ndarray) -> np.ndarray:
    """P_pi(y | x) = sum_u pi(u|x) P(y|x,u), restricted to nonterminal rows/columns."""
    nt = model.nonterminal
    P_pi = np.einsum("xa,xay->xy", pi, model.transition)
    return P_pi[np.ix_(nt, nt)]


def _solve(A: np.ndarray, b: np.ndarray, what: str) -> np.ndarray:
    try:
        if np.linalg.cond(A) > _COND_LIMIT:
            raise np.linalg.LinAlgError
        return np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        raise NonProperPolicyError(f"non-proper policy: singular system while solving for {what}") from None


def _embed(model: MdpModel, values_nt: np.ndarray) -> np.ndarray:
    out = np.zeros(model.n_states)
    out[model.nonterminal] = values_nt
    return out


def solve_J(model: MdpModel, policy: SoftmaxPolicy) -> Values:
    """Expected return: (I - gamma P_pi) J = r on nonterminal states."""
    pi = policy.probs()
    nt = model.nonterminal
    g = model.gamma
    A = np.eye(nt.size) - g * policy_transition(model, pi)
    J = _embed(model, _solve(A, model.reward[nt], "J"))
    J_sa = model.reward[:, None] + g * model.transition @ J
    J_sa[model.terminal] = 0.0
    return Values(J, J_sa)


def solve_M(model: MdpModel, policy: SoftmaxPolicy, J: Values) -> Values:
    """Second moment of the return.

    M(x,u) = r(x)^2 + 2 gamma r(x) sum_y P(y|x,u) J(y) + gamma^2 sum_y P(y|x,u) M(y).
    The gamma < 1 form is experimental.
    """
    pi = policy.probs()
    nt = model.nonterminal
    g = model.gamma
    r = model.reward
    next_J = model.transition @ J.state  # (S, A)
    rhs_sa = r[:, None] ** 2 + 2.0 * g * r[:, None] * next_J
    rhs = np.sum(pi * rhs_sa, axis=1)[nt]
    A = np.eye(nt.size) - g * g * policy_transition(model, pi)
    M = _embed(model, _solve(A, rhs, "M"))
    M_sa = rhs_sa + g * g * model.transition @ M
    M_sa[model.terminal] = 0.0
    return Values(M, M_sa)


def variance_from_moments(J, M):
    """V = M - J^2 elementwise (works on arrays or on ``Values`` pairs)."""
    if isinstance(J, Values):
        return Values(M.state - J.state ** 2, M.sa - J.sa ** 2)
    return np.asarray(M) - np.asarray(J) ** 2


def variance_bellman(model: MdpModel, policy: SoftmaxPolicy, J: Values) -> Values:
    """Variance of the return from its own recursion, independent of M.

    V(x) = gamma^2 (sum_y P_pi(y|x) V(y) + Var_{y ~ P_pi(.|x)} J(y)).
    """
    pi = policy.probs()
    nt = model.nonterminal
    g2 = model.gamma ** 2
    P = model.transition
    spread_sa = P @ (J.state ** 2) - (P @ J.state) ** 2
    mix_first = np.einsum("xa,xa->x", pi, P @ J.state)
    mix_second = np.einsum("xa,xa->x", pi, P @ (J.state ** 2))
    spread = (mix_second - mix_first ** 2)[nt]
    A = np.eye(nt.size) - g2 * policy_transition(model, pi)
    V = _embed(model, _solve(A, g2 * spread, "V"))
    V_sa = g2 * (P @ V + spread_sa)
    V_sa[model.terminal] = 0.0
    return Values(V, V_sa)


def _state_occupancy(model: MdpModel, pi: np.ndarray) -> np.ndarray:
    nt = model.nonterminal
    P_pi = policy_transition(model, pi)
    e0 = (nt == model.initial).astype(np.float64)
    return _solve(np.eye(nt.size) - P_pi.T, e0, "q")


def occupancy(model: MdpModel, policy: SoftmaxPolicy) -> np.ndarray:
    """Expected number of visits to each (x, u) before absorption, (S, A)."""
    pi = policy.probs()
    q = _embed(model, _state_occupancy(model, pi))
    return q[:, None] * pi


def weighted_occupancy(model: MdpModel, policy: SoftmaxPolicy, warn: bool = True) -> np.ndarray:
    """Visits at t >= 1 weighted by the reward collected before arrival, (S, A).

    q~ = (I - P_pi^T)^{-1} P_pi^T R (I - P_pi^T)^{-1} e(x0), R = diag(r).
    Only defined for undiscounted models.
    """
    if model.gamma != 1.0:
        raise ContractViolation("weighted occupancy requires gamma = 1")
    pi = policy.probs()
    nt = model.nonterminal
    P_pi = policy_transition(model, pi)
    q = _state_occupancy(model, pi)
    rhs = P_pi.T @ (model.reward[nt] * q)
    qt = _embed(model, _solve(np.eye(nt.size) - P_pi.T, rhs, "weighted occupancy"))
    qt_sa = qt[:, None] * pi
    if warn and np.any(qt_sa[nt] <= 0):
        warnings.warn(f"reward-weighted occupancy is not strictly positive "
                      f"(min {qt_sa[nt].min():.6g}); consider reward_baseline",
                      OccupancyWarning, stacklevel=2)
    return qt_sa


@dataclass(frozen=True, eq=False)
class ExactEvaluation:
    J_state: np.ndarray
    M_state: np.ndarray
    V_state: np.ndarray
    J_sa: np.ndarray
    M_sa: np.ndarray
    V_sa: np.ndarray
    q_sa: np.ndarray
    qtilde_sa: np.ndarray | None
    eta: float
    mu: float
    initial: int

    @property
    def J0(self) -> float:
        return float(self.J_state[self.initial])

    @property
    def M0(self) -> float:
        return float(self.M_state[self.initial])

    @property
    def V0(self) -> float:
        return float(self.V_state[self.initial])


def evaluate(model: MdpModel, policy: SoftmaxPolicy, mu: float = 0.0) -> ExactEvaluation:
    J = solve_J(model, policy)
    M = solve_M(model, policy, J)
    V = variance_from_moments(J, M)
    qt = weighted_occupancy(model, policy, warn=False) if model.gamma == 1.0 else None
    x0 = model.initial
    return ExactEvaluation(J.state, M.state, V.state, J.sa, M.sa, V.sa,
                           occupancy(model, policy), qt,
                           float(J.state[x0] - mu * V.state[x0]), mu, x0)


def eta(model: MdpModel, policy: SoftmaxPolicy, mu: float, objective: str = "eta") -> float:
    J = solve_J(model, policy)
    x0 = model.initial
    if objective == "J":
        return float(J.state[x0])
    M = solve_M(model, policy, J)
    V = float(M.state[x0] - J.state[x0] ** 2)
    if objective == "V":
        return V
    if objective != "eta":
        raise ValueError(f"unknown objective {objective!r}")
    return float(J.state[x0]) - mu * V


@dataclass(frozen=True, eq=False)
class GradientReport:
    """Gradients of J(x0), V(x0) and eta, plus the inner products behind grad_V.

    ``psi_M_q``, ``psi_J_qtilde`` and ``psi_J_q`` hold <psi_j, M>_q,
    <psi_j, J>_q~ and <psi_j, J>_q, so that
    grad_V = psi_M_q + 2 psi_J_qtilde - 2 J(x0) psi_J_q.
    """

    grad_J: np.ndarray
    grad_V: np.ndarray
    grad_eta: np.ndarray
    psi_M_q: np.ndarray
    psi_J_qtilde: np.ndarray
    psi_J_q: np.ndarray
    mu: float


def _inner(weights: np.ndarray, psi: np.ndarray, values: np.ndarray) -> np.ndarray:
    return np.einsum("xa,xaj,xa->j", weights, psi, values)


def _assemble(psi, q, qt, J_sa, M_sa, J0, mu) -> GradientReport:
    psi_J_q = _inner(q, psi, J_sa)
    psi_M_q = _inner(q, psi, M_sa)
    psi_J_qt = _inner(qt, psi, J_sa)
    grad_J = psi_J_q
    grad_V = psi_M_q + 2.0 * psi_J_qt - 2.0 * J0 * psi_J_q
    return GradientReport(grad_J, grad_V, grad_J - mu * grad_V, psi_M_q, psi_J_qt, psi_J_q, mu)


def exact_gradient(model: MdpModel, policy: SoftmaxPolicy, mu: float,
                   *, _qtilde_scale: float = 1.0) -> GradientReport:
    """grad_J = <psi, J>_q and grad_V = <psi, M>_q + 2<psi, J>_q~ - 2 J(x0) <psi, J>_q.

    ``_qtilde_scale`` is a fault-injection hook for verification tests.
    """
    if model.gamma != 1.0:
        raise ContractViolation("analytic gradient requires gamma = 1")
    J = solve_J(model, policy)
    M = solve_M(model, policy, J)
    q = occupancy(model, policy)
    qt = _qtilde_scale * weighted_occupancy(model, policy, warn=False)
    return _assemble(policy.score_table(), q, qt, J.sa, M.sa, J.state[model.initial], mu)


def finite_difference_gradient(model: MdpModel, policy: SoftmaxPolicy, mu: float,
                               h: float = 1e-5, objective: str = "eta") -> np.ndarray:
    """Central differences of eta (or of J(x0) / V(x0)) in theta."""
    theta = policy.theta
    grad = np.zeros(theta.size)
    for j in range(theta.size):
        step = np.zeros(theta.size)
        step[j] = h
        up = eta(model, policy.with_theta(theta + step), mu, objective)
        down = eta(model, policy.with_theta(theta - step), mu, objective)
        grad[j] = (up - down) / (2.0 * h)
    return grad


def projection_weights(values: np.ndarray, features: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted least squares: solve (Phi^T D Phi) w = Phi^T D v.

    ``values`` and ``weights`` are (S, A) tables, ``features`` is (S, A, d).
    Negative weights are accepted (the result is then a stationary point of
    an indefinite quadratic, not a metric projection).
    """
    d = features.shape[-1]
    Phi = features.reshape(-1, d)
    w = np.asarray(weights).reshape(-1)
    v = np.asarray(values).reshape(-1)
    if d == 0:
        return np.zeros(0)
    G = Phi.T @ (w[:, None] * Phi)
    b = Phi.T @ (w * v)
    sv = np.linalg.svd(G, compute_uv=False)
    if sv[0] == 0.0 or sv[-1] <= sv[0] * 1e-13:
        raise ProjectionError("rank deficiency under occupancy weighting")
    return np.linalg.solve(G, b)


def critic_fixed_point(model: MdpModel, policy: SoftmaxPolicy,
                       map_J: FeatureMap, map_M: FeatureMap) -> CriticState:
    """Critic weights whose features reproduce the projections of J and M."""
    J = solve_J(model, policy)
    M = solve_M(model, policy, J)
    q = occupancy(model, policy)
    qt = weighted_occupancy(model, policy, warn=False)
    phi_J = map_J.table(policy)
    phi_M = map_M.table(policy)
    return CriticState(
        w_J=projection_weights(J.sa, phi_J, q),
        w_M=projection_weights(M.sa, phi_M, q),
        w_tilde_J=projection_weights(J.sa, phi_J, qt),
        J0=float(J.state[model.initial]),
    )


def projected_gradient(model: MdpModel, policy: SoftmaxPolicy, mu: float,
                       map_J: FeatureMap, map_M: FeatureMap) -> GradientReport:
    """Gradient assembled from the projected critics instead of the true J and M."""
    if model.gamma != 1.0:
        raise ContractViolation("analytic gradient requires gamma = 1")
    fp = critic_fixed_point(model, policy, map_J, map_M)
    q = occupancy(model, policy)
    qt = weighted_occupancy(model, policy, warn=False)
    phi_J = map_J.table(policy)
    J_hat = phi_J @ fp.w_J
    M_hat = map_M.table(policy) @ fp.w_M
    J_tilde = phi_J @ fp.w_tilde_J
    psi = policy.score_table()
    psi_J_q = _inner(q, psi, J_hat)
    psi_M_q = _inner(q, psi, M_hat)
    psi_J_qt = _inner(qt, psi, J_tilde)
    grad_V = psi_M_q + 2.0 * psi_J_qt - 2.0 * fp.J0 * psi_J_q
    return GradientReport(psi_J_q, grad_V, psi_J_q - mu * grad_V, psi_M_q, psi_J_qt, psi_J_q, mu)


def critic_expected_update(model: MdpModel, policy: SoftmaxPolicy, state: CriticState,
                           map_J: FeatureMap, map_M: FeatureMap) -> CriticState:
    """Mean one-episode critic increment (step size 1) at fixed theta.

    Equal to minus the gradient of the q- / q~-weighted squared projection
    errors; the difference is returned as a CriticState-shaped record.
    """
    J = solve_J(model, policy)
    M = solve_M(model, policy, J)
    q = occupancy(model, policy)
    qt = weighted_occupancy(model, policy, warn=False)
    phi_J = map_J.table(policy)
    phi_M = map_M.table(policy)

    def direction(values, phi, weights, w):
        resid = weights * (values - phi @ w)
        return np.einsum("xa,xad->d", resid, phi)

    return CriticState(
        w_J=direction(J.sa, phi_J, q, state.w_J),
        w_M=direction(M.sa, phi_M, q, state.w_M),
        w_tilde_J=direction(J.sa, phi_J, qt, state.w_tilde_J),
        J0=float(J.state[model.initial] - state.J0),
    )
