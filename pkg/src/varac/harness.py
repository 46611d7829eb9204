"""Experiment configuration, training runs, verification report and CSV export."""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import engine, oracle
from .actor import THETA_MAX, StepSchedule, unbiasedness_check
from .critic import CriticState, critic_fixed_point_gap
from .errors import ContractViolation
from .features import check_rank, compatible_features
from .mdp import MAX_EPISODE_STEPS, MdpModel, SoftmaxPolicy, validate_model
from .models import load_model

log = logging.getLogger(__name__)

FD_RTOL = 1e-6
PROJECTION_RTOL = 1e-9


@dataclass
class ExperimentConfig:
    model: str
    mu: float = 0.2
    gamma: float | None = None
    schedule: StepSchedule = field(default_factory=StepSchedule)
    episodes: int = 200_000
    seed: int = 0
    reward_baseline: float = 0.0
    theta_init: str | list = "zeros"
    eval_every: int = 1000
    output: str | None = None
    theta_max: float | None = THETA_MAX
    max_episode_steps: int = MAX_EPISODE_STEPS
    check_episodes: int = 100_000
    fd_step: float = 1e-5
    backend: str | None = None

    @classmethod
    def from_dict(cls, doc: dict, base_dir=None) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        doc = dict(doc)
        sched = doc.get("schedule", {})
        if isinstance(sched, dict):
            sched_known = {f.name for f in dataclasses.fields(StepSchedule)}
            if set(sched) - sched_known:
                raise ValueError(f"unknown schedule fields: {sorted(set(sched) - sched_known)}")
            doc["schedule"] = StepSchedule(**sched)
        if base_dir is not None:
            for key in ("model", "output"):
                value = doc.get(key)
                if value and not str(value).startswith("builtin:") and not Path(value).is_absolute():
                    doc[key] = str(Path(base_dir) / value)
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh), base_dir=Path(path).parent)

    def problems(self) -> list[str]:
        out = list(self.schedule.problems())
        if self.episodes < 1:
            out.append("episodes must be >= 1")
        if not 1 <= self.eval_every <= self.episodes:
            out.append("eval_every must be in [1, episodes]")
        if self.mu < 0:
            out.append("mu must be >= 0")
        if self.seed < 0 or self.seed >= 2 ** 64:
            out.append("seed must be a 64-bit unsigned integer")
        return out

    def build(self) -> tuple[MdpModel, SoftmaxPolicy]:
        """Load and validate the model, apply overrides, build the initial policy."""
        problems = self.problems()
        if problems:
            raise ValueError("invalid config: " + "; ".join(problems))
        model = load_model(self.model)
        if self.gamma is not None:
            model = model.with_gamma(self.gamma)
        if self.reward_baseline:
            model = model.with_reward_baseline(self.reward_baseline)
        violations = validate_model(model)
        if violations:
            raise ValueError("invalid model: " + "; ".join(violations))
        policy = SoftmaxPolicy.tabular(model)
        if self.theta_init != "zeros":
            theta = np.asarray(self.theta_init, dtype=np.float64)
            if theta.shape != (policy.n_params,):
                raise ValueError(f"theta_init has {theta.size} entries, policy has {policy.n_params}")
            policy = policy.with_theta(theta)
        return model, policy


@dataclass(frozen=True)
class HistoryRecord:
    episode: int
    theta: np.ndarray
    eta: float
    J0_est: float
    J_oracle: float
    V_oracle: float
    grad_norm: float
    critic_gap: float
    clamped: int


@dataclass(eq=False)
class TrainingHistory:
    records: list[HistoryRecord]
    final_critic: CriticState | None = None

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    @property
    def final_theta(self) -> np.ndarray:
        return self.records[-1].theta


def run_training(config: ExperimentConfig) -> TrainingHistory:
    """Train from ``config``; oracle diagnostics are computed afterwards from snapshots."""
    model, policy = config.build()
    if model.gamma != 1.0:
        raise ContractViolation("training is only defined for gamma = 1")
    fmap = compatible_features(policy)
    rng = np.random.default_rng(config.seed)
    trace = engine.train(model, policy, fmap, fmap, config.mu, config.schedule, config.episodes, rng,
                         eval_every=config.eval_every, theta_max=config.theta_max,
                         max_steps=config.max_episode_steps, backend=config.backend)
    records = []
    for k in range(trace.episode.size):
        pol = policy.with_theta(trace.theta[k])
        ev = oracle.evaluate(model, pol, config.mu)
        grad = oracle.exact_gradient(model, pol, config.mu).grad_eta
        target = oracle.critic_fixed_point(model, pol, fmap, fmap)
        records.append(HistoryRecord(
            episode=int(trace.episode[k]), theta=trace.theta[k].copy(), eta=ev.eta,
            J0_est=float(trace.J0[k]), J_oracle=ev.J0, V_oracle=ev.V0,
            grad_norm=float(np.linalg.norm(grad)), critic_gap=critic_fixed_point_gap(trace.critic(k), target),
            clamped=int(trace.clamps[k])))
    log.info("trained %d episodes, final eta %.6g", config.episodes, records[-1].eta)
    return TrainingHistory(records, trace.critic(-1))


CSV_FIXED = ["episode", "eta", "J0_est", "J_oracle", "V_oracle", "grad_norm", "critic_gap", "clamped"]


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def export_history(history: TrainingHistory, path) -> None:
    n = history.final_theta.size if history.records else 0
    header = CSV_FIXED + [f"theta_{j}" for j in range(n)]
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for r in history.records:
                writer.writerow([r.episode, _fmt(r.eta), _fmt(r.J0_est), _fmt(r.J_oracle), _fmt(r.V_oracle),
                                 _fmt(r.grad_norm), _fmt(r.critic_gap), r.clamped]
                                + [_fmt(t) for t in r.theta])
    except OSError as exc:
        raise OSError(f"cannot write history to {path}: {exc}") from exc


def read_history(path) -> TrainingHistory:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    records = []
    for row in rows:
        thetas = sorted((k for k in row if k.startswith("theta_")), key=lambda k: int(k[6:]))
        records.append(HistoryRecord(
            int(row["episode"]), np.array([float(row[k]) for k in thetas]), float(row["eta"]),
            float(row["J0_est"]), float(row["J_oracle"]), float(row["V_oracle"]), float(row["grad_norm"]),
            float(row["critic_gap"]), int(row["clamped"])))
    return TrainingHistory(records)


def relative_error(a, b, floor: float = 1e-8) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), floor))


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str
    skipped: bool = False

    def line(self) -> str:
        status = "SKIP" if self.skipped else ("PASS" if self.passed else "FAIL")
        return f"{status}  {self.name}: {self.detail}"


@dataclass(eq=False)
class GradCheckReport:
    checks: list[Check]

    @property
    def passed(self) -> bool:
        return all(c.passed or c.skipped for c in self.checks)

    def lines(self) -> list[str]:
        return [c.line() for c in self.checks]


def grad_check(config: ExperimentConfig, *, _corrupt_qtilde: bool = False) -> GradCheckReport:
    """Exact vs finite-difference gradients, compatible-projection identity and
    Monte Carlo unbiasedness of the actor estimate, at ``theta_init``."""
    model, policy = config.build()
    mu = config.mu
    fmap = compatible_features(policy)
    checks = []

    rank = check_rank(fmap, policy, model)
    checks.append(Check("feature rank", not rank.deficient, f"rank {rank.rank} of dim {rank.dim}"))
    q = oracle.occupancy(model, policy)[model.nonterminal]
    checks.append(Check("occupancy positive", bool(np.all(q > 0)), f"min q = {q.min():.6g}"))
    qt = oracle.weighted_occupancy(model, policy, warn=False)[model.nonterminal]
    checks.append(Check("weighted occupancy positive", bool(np.all(qt > 0)), f"min q~ = {qt.min():.6g}",
                        skipped=mu == 0))

    exact = oracle.exact_gradient(model, policy, mu, _qtilde_scale=-1.0 if _corrupt_qtilde else 1.0)
    for label, objective, value in (("J", "J", exact.grad_J), ("V", "V", exact.grad_V), ("eta", "eta", exact.grad_eta)):
        fd = oracle.finite_difference_gradient(model, policy, mu, h=config.fd_step, objective=objective)
        err = relative_error(value, fd)
        checks.append(Check(f"exact vs finite difference: grad {label}", err < FD_RTOL,
                            f"relative error {err:.3g} (tol {FD_RTOL:g})", skipped=label == "V" and mu == 0))

    if not rank.deficient:
        proj = oracle.projected_gradient(model, policy, mu, fmap, fmap)
        for label, a, b in (("J", proj.grad_J, exact.grad_J), ("V", proj.grad_V, exact.grad_V)):
            err = relative_error(a, b, floor=1.0)
            checks.append(Check(f"compatible projection: grad {label}", err < PROJECTION_RTOL,
                                f"relative error {err:.3g} (tol {PROJECTION_RTOL:g})",
                                skipped=label == "V" and mu == 0))

        if config.check_episodes > 0:
            mc = unbiasedness_check(model, policy, mu, config.check_episodes, seed=config.seed,
                                    backend=config.backend)
            diff = mc.mean - exact.grad_eta
            z = diff / np.where(mc.stderr > 0, mc.stderr, np.inf)
            ok = bool(np.all(np.abs(z) < 3.0)) if mc.stderr.size else True
            label = "grad eta" if mu else "grad J"
            checks.append(Check(f"monte carlo unbiasedness: {label}", ok,
                                f"max |z| = {np.max(np.abs(z), initial=0.0):.3g} over {config.check_episodes} episodes"))
    return GradCheckReport(checks)


def _named_table(model: MdpModel, table: np.ndarray) -> dict:
    return {model.states[x]: {model.actions[u]: float(table[x, u]) for u in range(model.n_actions)}
            for x in model.nonterminal}


def eval_report(config: ExperimentConfig) -> dict:
    """Exact evaluation at ``theta_init`` as a JSON-ready document."""
    model, policy = config.build()
    ev = oracle.evaluate(model, policy, config.mu)
    fmap = compatible_features(policy)
    rank = check_rank(fmap, policy, model)
    nt = model.nonterminal
    doc = {
        "model": config.model,
        "mu": config.mu,
        "gamma": model.gamma,
        "reward_baseline": config.reward_baseline,
        "theta": policy.theta.tolist(),
        "initial_state": model.states[model.initial],
        "J": ev.J0,
        "M": ev.M0,
        "V": ev.V0,
        "eta": ev.eta,
        "q": _named_table(model, ev.q_sa),
        "qtilde": None if ev.qtilde_sa is None else _named_table(model, ev.qtilde_sa),
        "checks": {
            "occupancy_positive": bool(np.all(ev.q_sa[nt] > 0)),
            "min_q": float(ev.q_sa[nt].min()),
            "weighted_occupancy_positive": None if ev.qtilde_sa is None else bool(np.all(ev.qtilde_sa[nt] > 0)),
            "min_qtilde": None if ev.qtilde_sa is None else float(ev.qtilde_sa[nt].min()),
            "feature_rank": rank.rank,
            "feature_dim": rank.dim,
        },
    }
    if model.gamma == 1.0:
        g = oracle.exact_gradient(model, policy, config.mu)
        doc.update(grad_J=g.grad_J.tolist(), grad_V=g.grad_V.tolist(), grad_eta=g.grad_eta.tolist())
    else:
        doc["grad_eta"] = None
    return doc


def sanitize(doc):
    """Replace non-finite floats so the report stays valid JSON."""
    if isinstance(doc, dict):
        return {k: sanitize(v) for k, v in doc.items()}
    if isinstance(doc, list):
        return [sanitize(v) for v in doc]
    if isinstance(doc, float) and not math.isfinite(doc):
        return None
    return doc
