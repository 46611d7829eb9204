import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from varac.errors import ContractViolation, NonProperPolicyError
from varac.mdp import (MdpModel, SoftmaxPolicy, Trajectory, action_distribution, cdf_table, discounted_return,
                       sample_index, score, simulate_episode, validate_model)
from varac.models import geo, random_mdp


def test_builtin_models_are_valid(geo_model, chain_model):
    assert validate_model(geo_model) == []
    assert validate_model(chain_model) == []


def test_row_not_stochastic_reported():
    P = np.zeros((2, 2, 2))
    P[0, 0, 0], P[0, 0, 1] = 0.9, 0.05
    P[0, 1, 1] = 1.0
    m = MdpModel(("s", "x*"), ("cont", "stop"), P, [1.0, 0.0], 0, 1)
    problems = validate_model(m)
    assert len(problems) == 1
    assert "row not stochastic at (s,cont)" in problems[0]


def test_terminal_reward_and_gamma_reported():
    m = geo()
    bad = MdpModel(m.states, m.actions, m.transition, [1.0, 0.5], 0, 1, gamma=1.5)
    problems = " ".join(validate_model(bad))
    assert "terminal" in problems and "discount" in problems


def test_unreachable_terminal_reported():
    P = np.zeros((3, 1, 3))
    P[0, 0, 1] = 1.0
    P[1, 0, 1] = 1.0
    m = MdpModel(("a", "b", "x*"), ("go",), P, [1, 1, 0], 0, 2)
    assert any("terminal state unreachable from b" in p for p in validate_model(m))


def test_shape_mismatch_is_contract_violation():
    with pytest.raises(ContractViolation):
        MdpModel(("s", "x*"), ("a",), np.zeros((2, 2, 2)), [1, 0], 0, 1)


def test_geo_policy_at_zero(geo_model):
    pol = SoftmaxPolicy.tabular(geo_model)
    assert pol.n_params == 1
    np.testing.assert_array_equal(action_distribution(pol, 0), [0.5, 0.5])
    np.testing.assert_array_equal(score(pol, 0, 0), [0.5])
    np.testing.assert_array_equal(score(pol, 0, 1), [-0.5])


def test_terminal_state_has_no_policy(geo_model):
    pol = SoftmaxPolicy.tabular(geo_model)
    with pytest.raises(ContractViolation):
        score(pol, 1, 0)
    with pytest.raises(ContractViolation):
        action_distribution(pol, 1)


def test_parameter_count_for_random_model():
    m = random_mdp(np.random.default_rng(0))
    assert SoftmaxPolicy.tabular(m).n_params == 5 * 2
    assert SoftmaxPolicy.tabular(m, reference=None).n_params == 5 * 3


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-30, 30), min_size=10, max_size=10))
def test_policy_invariants(theta):
    m = random_mdp(np.random.default_rng(3))
    pol = SoftmaxPolicy.tabular(m, np.array(theta))
    pi = pol.probs()
    nt = m.nonterminal
    assert np.all(np.abs(pi[nt].sum(axis=1) - 1.0) <= 1e-12)
    assert np.all(pi[nt] > 0)
    psi = pol.score_table()
    mean = np.einsum("xa,xaj->xj", pi, psi)
    assert np.max(np.abs(mean)) < 1e-12


def test_score_matches_finite_difference_of_log_policy():
    m = random_mdp(np.random.default_rng(5))
    rng = np.random.default_rng(6)
    pol = SoftmaxPolicy.tabular(m, rng.uniform(-2, 2, 10))
    h = 1e-6
    for x in range(5):
        for u in range(3):
            fd = np.zeros(10)
            for j in range(10):
                e = np.zeros(10)
                e[j] = h
                up = np.log(pol.with_theta(pol.theta + e).probs()[x, u])
                down = np.log(pol.with_theta(pol.theta - e).probs()[x, u])
                fd[j] = (up - down) / (2 * h)
            np.testing.assert_allclose(score(pol, x, u), fd, atol=1e-8)
            np.testing.assert_array_equal(score(pol, x, u), pol.score_rows([x], [u])[0])


def test_cdf_table_pins_last_positive_entry():
    p = np.array([[0.1, 0.2, 0.7, 0.0], [0.0, 0.0, 0.0, 0.0]])
    cdf = cdf_table(p)
    assert cdf[0, 2] == 1.0 and cdf[0, 3] == 1.0
    assert sample_index(cdf[0], 0.9999999999999999) == 2
    assert sample_index(cdf[0], 0.0) == 0


def test_chain_trajectory(chain_model, rng):
    traj = simulate_episode(chain_model, SoftmaxPolicy.tabular(chain_model), rng)
    assert traj.steps == [(0, 0, 1.0), (1, 0, 2.0)]
    assert traj.tau == 2


def test_same_seed_same_trajectory():
    m = random_mdp(np.random.default_rng(1))
    pol = SoftmaxPolicy.tabular(m, np.random.default_rng(2).normal(size=10))
    a = [simulate_episode(m, pol, np.random.default_rng(9)) for _ in range(2)]
    assert a[0].steps == a[1].steps


def test_trajectory_invariants():
    m = random_mdp(np.random.default_rng(7))
    pol = SoftmaxPolicy.tabular(m)
    rng = np.random.default_rng(8)
    for _ in range(200):
        traj = simulate_episode(m, pol, rng)
        assert traj.tau >= 1
        assert m.terminal not in traj.states
        np.testing.assert_array_equal(traj.rewards, m.reward[traj.states])


def test_non_proper_guard():
    P = np.zeros((2, 2, 2))
    P[0, 0, 0] = 1.0
    P[0, 1, 1] = 1.0
    m = MdpModel(("s", "x*"), ("loop", "stop"), P, [1, 0], 0, 1)
    pol = SoftmaxPolicy.tabular(m, [40.0])
    with pytest.raises(NonProperPolicyError, match="max_episode_steps=50"):
        simulate_episode(m, pol, np.random.default_rng(0), max_steps=50)


def test_empty_trajectory_rejected():
    with pytest.raises(ContractViolation):
        Trajectory(np.array([], dtype=np.int64), np.array([], dtype=np.int64), np.array([]))


def test_return_sums(geo_model):
    traj = Trajectory.from_steps(geo_model, [(0, 0), (0, 1)])
    sums = discounted_return(traj)
    assert sums.total == 2.0
    np.testing.assert_array_equal(sums.suffix, [2.0, 1.0])
    np.testing.assert_array_equal(sums.prefix, [0.0, 1.0])
    half = discounted_return(traj, 0.5)
    np.testing.assert_array_equal(half.suffix, [1.5, 1.0])


def test_reward_baseline_shifts_nonterminal_only(geo_model):
    shifted = geo_model.with_reward_baseline(0.25)
    np.testing.assert_array_equal(shifted.reward, [1.25, 0.0])
