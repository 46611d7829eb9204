"""Built-in test models and the JSON model file format.

Model file layout::

    {
      "states": ["s", "x*"],          # last entry is terminal unless flagged
      "initial": "s",
      "actions": ["cont", "stop"],
      "rewards": {"s": 1.0},          # missing states get 0
      "transitions": [{"from": "s", "action": "cont", "to": "s", "prob": 0.9}, ...],
      "gamma": 1.0
    }

A state entry may also be an object ``{"name": ..., "terminal": true}``.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .mdp import MdpModel

FILE_PROB_TOL = 1e-9
_MODEL_KEYS = {"name", "description", "states", "initial", "actions", "rewards", "transitions", "gamma"}


def geo(stay: float = 0.9, reward: float = 1.0) -> MdpModel:
    """One nonterminal state ``s`` with actions ``cont`` and ``stop``.

    ``cont`` returns to ``s`` with probability ``stay``; ``stop`` always
    terminates. Every visit to ``s`` pays ``reward``, so under a policy that
    continues with probability c the return is geometric with parameter
    ``stay * c``.
    """
    P = np.zeros((2, 2, 2))
    P[0, 0, 0] = stay
    P[0, 0, 1] = 1.0 - stay
    P[0, 1, 1] = 1.0
    return MdpModel(("s", "x*"), ("cont", "stop"), P, [reward, 0.0], initial=0, terminal=1)


def chain3() -> MdpModel:
    """Deterministic chain s1 -> s2 -> x* with rewards 1, 2 and a single action."""
    P = np.zeros((3, 1, 3))
    P[0, 0, 1] = 1.0
    P[1, 0, 2] = 1.0
    return MdpModel(("s1", "s2", "x*"), ("go",), P, [1.0, 2.0, 0.0], initial=0, terminal=2)


def random_mdp(rng: np.random.Generator, n_states: int = 5, n_actions: int = 3,
               min_exit: float = 0.1, max_exit: float = 0.5,
               reward_range: tuple[float, float] = (0.5, 1.5)) -> MdpModel:
    """Random proper MDP with ``n_states`` nonterminal states plus a terminal one.

    Every (x, u) exits with probability in [min_exit, max_exit] and spreads the
    remainder over all nonterminal states, so every policy is proper and every
    state-action pair is visited. Rewards are positive, which keeps the
    reward-weighted occupancy positive too.
    """
    S = n_states + 1
    P = np.zeros((S, n_actions, S))
    for x in range(n_states):
        for u in range(n_actions):
            exit_p = rng.uniform(min_exit, max_exit)
            P[x, u, :n_states] = (1.0 - exit_p) * rng.dirichlet(np.ones(n_states))
            P[x, u, n_states] = exit_p
    r = np.zeros(S)
    r[:n_states] = rng.uniform(*reward_range, size=n_states)
    states = tuple(f"s{i}" for i in range(n_states)) + ("x*",)
    actions = tuple(f"a{j}" for j in range(n_actions))
    return MdpModel(states, actions, P, r, initial=0, terminal=n_states)


BUILTIN = {"geo": geo, "chain3": chain3}


def model_from_dict(doc: dict) -> MdpModel:
    unknown = set(doc) - _MODEL_KEYS
    if unknown:
        raise ValueError(f"unknown model fields: {sorted(unknown)}")
    names, terminal = [], None
    for entry in doc["states"]:
        if isinstance(entry, dict):
            names.append(entry["name"])
            if entry.get("terminal"):
                if terminal is not None:
                    raise ValueError("more than one terminal state flagged")
                terminal = len(names) - 1
        else:
            names.append(entry)
    if len(set(names)) != len(names):
        raise ValueError("duplicate state names")
    if terminal is None:
        terminal = len(names) - 1
    actions = list(doc["actions"])
    s_idx = {n: i for i, n in enumerate(names)}
    a_idx = {n: i for i, n in enumerate(actions)}

    S, A = len(names), len(actions)
    P = np.zeros((S, A, S))
    for tr in doc["transitions"]:
        try:
            x, u, y = s_idx[tr["from"]], a_idx[tr["action"]], s_idx[tr["to"]]
        except KeyError as exc:
            raise ValueError(f"transition {tr} refers to unknown name {exc}") from None
        P[x, u, y] += float(tr["prob"])
    for x in range(S):
        if x == terminal:
            P[x] = 0.0
            continue
        for u in range(A):
            total = P[x, u].sum()
            if abs(total - 1.0) > FILE_PROB_TOL:
                raise ValueError(f"probabilities for ({names[x]},{actions[u]}) sum to {total:.12g}")
            P[x, u] /= total

    r = np.zeros(S)
    for name, value in doc.get("rewards", {}).items():
        if name not in s_idx:
            raise ValueError(f"reward given for unknown state {name!r}")
        r[s_idx[name]] = float(value)
    initial = s_idx[doc.get("initial", names[0])]
    return MdpModel(tuple(names), tuple(actions), P, r, initial, terminal, float(doc.get("gamma", 1.0)))


def model_to_dict(model: MdpModel) -> dict:
    states: list = list(model.states)
    if model.terminal != model.n_states - 1:
        states[model.terminal] = {"name": model.states[model.terminal], "terminal": True}
    transitions = []
    for x in model.nonterminal:
        for u in range(model.n_actions):
            for y in np.flatnonzero(model.transition[x, u]):
                transitions.append({"from": model.states[x], "action": model.actions[u],
                                    "to": model.states[y], "prob": float(model.transition[x, u, y])})
    return {
        "states": states,
        "initial": model.states[model.initial],
        "actions": list(model.actions),
        "rewards": {model.states[x]: float(model.reward[x]) for x in model.nonterminal},
        "transitions": transitions,
        "gamma": model.gamma,
    }


def load_model(path) -> MdpModel:
    """Read a model file; ``builtin:geo`` / ``builtin:chain3`` name built-ins."""
    text = str(path)
    if text.startswith("builtin:"):
        name, _, arg = text[len("builtin:"):].partition(":")
        if name not in BUILTIN:
            raise ValueError(f"unknown builtin model {name!r}")
        return BUILTIN[name](float(arg)) if arg else BUILTIN[name]()
    with open(path) as fh:
        return model_from_dict(json.load(fh))


def save_model(model: MdpModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=2) + "\n")
