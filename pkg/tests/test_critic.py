import numpy as np
import pytest

from varac import engine, oracle
from varac.actor import StepSchedule
from varac.critic import CriticState, critic_fixed_point_gap, critic_increment, critic_update, episode_features
from varac.errors import ContractViolation, DivergenceError
from varac.features import compatible_features
from varac.mdp import SoftmaxPolicy, Trajectory
from varac.models import geo, random_mdp


@pytest.fixture
def geo_setup(geo_model):
    pol = SoftmaxPolicy.tabular(geo_model)
    return geo_model, pol, compatible_features(pol)


def test_hand_example(geo_setup):
    m, pol, fmap = geo_setup
    traj = Trajectory.from_steps(m, [(0, 0), (0, 1)])
    new = critic_update(CriticState.zeros(1, 1), traj, fmap, fmap, pol, 0.1)
    # G = (2, 1), G^2 = (4, 1), C = (0, 1), psi = (+1/2, -1/2)
    assert new.w_J[0] == pytest.approx(0.1 * (2 * 0.5 + 1 * -0.5), abs=1e-15)
    assert new.w_J[0] == pytest.approx(0.05, abs=1e-15)
    assert new.w_M[0] == pytest.approx(0.1 * (4 * 0.5 + 1 * -0.5), abs=1e-15)
    assert new.w_M[0] == pytest.approx(0.15, abs=1e-15)
    assert new.w_tilde_J[0] == pytest.approx(-0.05, abs=1e-15)
    assert new.J0 == pytest.approx(0.2, abs=1e-15)
    assert new.episode_index == 1


def test_zero_rewards_leave_state_unchanged():
    m = geo(reward=0.0)
    pol = SoftmaxPolicy.tabular(m)
    fmap = compatible_features(pol)
    traj = Trajectory.from_steps(m, [(0, 0), (0, 0), (0, 1)])
    new = critic_update(CriticState.zeros(1, 1), traj, fmap, fmap, pol, 0.5)
    np.testing.assert_array_equal(new.as_vector(), 0.0)


def test_contract_violations(geo_setup):
    m, pol, fmap = geo_setup
    traj = Trajectory.from_steps(m, [(0, 1)])
    with pytest.raises(ContractViolation):
        critic_update(CriticState.zeros(2, 1), traj, fmap, fmap, pol, 0.1)
    with pytest.raises(ContractViolation):
        critic_update(CriticState.zeros(1, 1), traj, fmap, fmap, pol, 0.0)


def test_divergence_detected(geo_setup):
    m, pol, fmap = geo_setup
    traj = Trajectory.from_steps(m, [(0, 0)] * 50 + [(0, 1)])
    state = CriticState.zeros(1, 1)
    with pytest.raises(DivergenceError, match="reduce the critic step size"):
        for _ in range(200):
            state = critic_update(state, traj, fmap, fmap, pol, 1e6)


def test_terminal_step_adds_nothing(geo_setup):
    """phi(x*) = 0 and r(x*) = 0, so extending the sums to t = tau changes nothing."""
    m, pol, fmap = geo_setup
    traj = Trajectory.from_steps(m, [(0, 0), (0, 0), (0, 1)])
    state = CriticState([0.3], [1.1], [-0.2], 0.7)
    ep = episode_features(traj, fmap, fmap, pol)
    inc = critic_increment(state, ep)
    long = Trajectory(np.append(traj.states, m.terminal), np.append(traj.actions, 0), np.append(traj.rewards, 0.0))
    ep_long = episode_features(long, fmap, fmap, pol)
    np.testing.assert_array_equal(ep_long.phi_J[-1], 0.0)
    np.testing.assert_allclose(critic_increment(state, ep_long).as_vector(), inc.as_vector(), atol=1e-15)


def test_gap(geo_setup):
    m, pol, fmap = geo_setup
    fp = oracle.critic_fixed_point(m, pol, fmap, fmap)
    assert critic_fixed_point_gap(fp, fp) == 0.0
    expected = max(abs(fp.w_J[0]), abs(fp.w_M[0]), abs(fp.w_tilde_J[0]), abs(fp.J0))
    assert critic_fixed_point_gap(CriticState.zeros(1, 1), fp) == pytest.approx(expected)


def test_mean_increment_matches_least_squares_direction():
    """Averaged increments at arbitrary weights equal the oracle's descent direction."""
    m = random_mdp(np.random.default_rng(1002))
    pol = SoftmaxPolicy.tabular(m, np.random.default_rng(7).uniform(-1, 1, 10))
    fmap = compatible_features(pol)
    rng = np.random.default_rng(8)
    state = CriticState(rng.normal(size=10), rng.normal(size=10), rng.normal(size=10), 1.0)
    expected = oracle.critic_expected_update(m, pol, state, fmap, fmap)
    n = 100_000
    incs = engine.critic_increments(m, pol, state, fmap, fmap, n, np.random.default_rng(9))
    for got, want in zip(incs, (expected.w_J, expected.w_M, expected.w_tilde_J, expected.J0)):
        z = (got.mean(axis=0) - want) / (got.std(axis=0, ddof=1) / np.sqrt(n))
        assert np.max(np.abs(z)) < 4.0  # up to 10 components per block


def test_mean_increment_vanishes_at_fixed_point(geo_setup):
    m, pol, fmap = geo_setup
    fp = oracle.critic_fixed_point(m, pol, fmap, fmap)
    n = 100_000
    incs = engine.critic_increments(m, pol, fp, fmap, fmap, n, np.random.default_rng(10))
    for got in incs:
        z = got.mean(axis=0) / (got.std(axis=0, ddof=1) / np.sqrt(n))
        assert np.all(np.abs(z) < 3.0)


def test_critic_only_gap_shrinks():
    m = random_mdp(np.random.default_rng(1004))
    pol = SoftmaxPolicy.tabular(m)
    fmap = compatible_features(pol)
    fp = oracle.critic_fixed_point(m, pol, fmap, fmap)
    trace = engine.train(m, pol, fmap, fmap, 0.0, StepSchedule(), 40_000, np.random.default_rng(0),
                         eval_every=1000, update_actor=False)
    gaps = np.array([critic_fixed_point_gap(trace.critic(k), fp) for k in range(trace.episode.size)])
    windows = gaps.reshape(4, 10).mean(axis=1)
    assert windows[-1] < 0.6 * windows[0]
    assert np.polyfit(np.log(trace.episode), np.log(gaps), 1)[0] < 0
    np.testing.assert_array_equal(trace.theta, 0.0)
