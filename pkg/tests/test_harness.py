import json

import numpy as np
import pytest

from varac import harness
from varac.actor import StepSchedule
from varac.errors import ContractViolation


def cfg(**kw):
    base = dict(model="builtin:geo", mu=0.2, episodes=2000, seed=3, eval_every=500, check_episodes=20_000)
    base.update(kw)
    return harness.ExperimentConfig(**base)


def test_from_dict_rejects_unknown_fields():
    with pytest.raises(ValueError, match="unknown config fields"):
        harness.ExperimentConfig.from_dict({"model": "builtin:geo", "learning_rate": 1})
    with pytest.raises(ValueError, match="unknown schedule fields"):
        harness.ExperimentConfig.from_dict({"model": "builtin:geo", "schedule": {"c_gamma": 1}})


def test_load_resolves_relative_paths(tmp_path):
    (tmp_path / "cfg.json").write_text(json.dumps({
        "model": "m.json", "output": "out.csv", "schedule": {"c_beta": 0.5}, "episodes": 10, "eval_every": 5}))
    c = harness.ExperimentConfig.load(tmp_path / "cfg.json")
    assert c.model == str(tmp_path / "m.json") and c.output == str(tmp_path / "out.csv")
    assert c.schedule == StepSchedule(c_beta=0.5)


@pytest.mark.parametrize("kw,msg", [
    ({"episodes": 0}, "episodes"),
    ({"episodes": 10, "eval_every": 20}, "eval_every"),
    ({"mu": -1.0}, "mu"),
    ({"schedule": StepSchedule(e_alpha=0.9, e_beta=0.8)}, "exponents"),
    ({"theta_init": [1.0, 2.0]}, "theta_init"),
    ({"model": "builtin:geo:1.5"}, "invalid model"),
])
def test_invalid_configs(kw, msg):
    with pytest.raises(ValueError, match=msg):
        cfg(**kw).build()


def test_training_requires_undiscounted_model():
    with pytest.raises(ContractViolation):
        harness.run_training(cfg(gamma=0.9))


def test_one_episode_one_record():
    h = harness.run_training(cfg(episodes=1, eval_every=1))
    assert len(h) == 1 and h.records[0].episode == 1


def test_history_contents():
    h = harness.run_training(cfg())
    assert len(h) == 4
    assert [r.episode for r in h.records] == [500, 1000, 1500, 2000]
    for r in h.records:
        assert all(np.isfinite([r.eta, r.J0_est, r.J_oracle, r.V_oracle, r.grad_norm, r.critic_gap]))
        c = 1.0 / (1.0 + np.exp(-r.theta[0]))
        x = 1.0 / (1.0 - 0.9 * c)
        assert r.J_oracle == pytest.approx(x, rel=1e-12)
        assert r.eta == pytest.approx(x - 0.2 * (x * x - x), rel=1e-12)


def test_reproducible_and_csv(tmp_path):
    a = harness.run_training(cfg(seed=9))
    b = harness.run_training(cfg(seed=9))
    harness.export_history(a, tmp_path / "a.csv")
    harness.export_history(b, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    other = harness.run_training(cfg(seed=10))
    assert other.final_theta[0] != a.final_theta[0]


def test_csv_schema_and_round_trip(tmp_path):
    h = harness.run_training(cfg(model="builtin:geo", episodes=1, eval_every=1))
    path = tmp_path / "h.csv"
    harness.export_history(h, path)
    lines = path.read_text().splitlines()
    assert len(lines) == 2
    assert lines[0] == "episode,eta,J0_est,J_oracle,V_oracle,grad_norm,critic_gap,clamped,theta_0"
    assert len(lines[1].split(",")) == 8 + 1

    h = harness.run_training(cfg(theta_init=[0.3], episodes=3000, eval_every=100))
    harness.export_history(h, path)
    back = harness.read_history(path)
    for x, y in zip(h.records, back.records):
        assert x.theta.tobytes() == y.theta.tobytes()
        assert x.eta == y.eta and x.critic_gap == y.critic_gap and x.clamped == y.clamped


def test_export_error_names_path(tmp_path):
    h = harness.run_training(cfg(episodes=1, eval_every=1))
    bad = tmp_path / "missing" / "h.csv"
    with pytest.raises(OSError, match="missing"):
        harness.export_history(h, bad)


def test_mu_zero_eta_trend():
    h = harness.run_training(cfg(mu=0.0, episodes=100_000, eval_every=10, seed=1))
    eta = h.column("eta")
    windows = eta.reshape(-1, 500).mean(axis=1)
    assert np.all(np.diff(windows) >= 0)


def test_grad_check_geo_defaults():
    rep = harness.grad_check(cfg())
    assert rep.passed, rep.lines()
    assert not any(c.skipped for c in rep.checks)


def test_grad_check_detects_corrupted_qtilde():
    rep = harness.grad_check(cfg(), _corrupt_qtilde=True)
    assert not rep.passed
    failed = {c.name for c in rep.checks if not c.passed}
    assert "exact vs finite difference: grad V" in failed
    assert "exact vs finite difference: grad J" not in failed


def test_grad_check_mu_zero_skips_variance_terms():
    rep = harness.grad_check(cfg(mu=0.0))
    assert rep.passed
    skipped = {c.name for c in rep.checks if c.skipped}
    assert "exact vs finite difference: grad V" in skipped
    assert "compatible projection: grad V" in skipped
    assert any(c.name == "monte carlo unbiasedness: grad J" and c.passed for c in rep.checks)


def test_eval_report_matches_oracle():
    doc = harness.eval_report(cfg(theta_init=[0.0]))
    assert doc["J"] == pytest.approx(1.818182, abs=1e-6)
    assert doc["qtilde"]["s"]["cont"] == pytest.approx(0.743802, abs=1e-6)
    assert doc["grad_eta"][0] == pytest.approx(0.351615, abs=1e-6)
    assert doc["checks"]["occupancy_positive"] and doc["checks"]["weighted_occupancy_positive"]
    json.dumps(harness.sanitize(doc))


def test_reward_baseline_changes_objective():
    plain = harness.eval_report(cfg())
    shifted = harness.eval_report(cfg(reward_baseline=1.0))
    assert shifted["J"] == pytest.approx(2 * plain["J"])
    assert shifted["V"] == pytest.approx(4 * plain["V"])
