"""Compatible linear features for the J and M critics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import MdpModel, SoftmaxPolicy

RANK_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """phi(theta, x, u) = [psi_theta(x, u), extra(x, u)].

    ``extra`` is an optional fixed (S, A, k) table appended after the score
    block; its terminal row is forced to zero.
    """

    n_score: int
    extra: np.ndarray | None = None

    def __post_init__(self):
        if self.extra is not None:
            extra = np.array(self.extra, dtype=np.float64)
            if extra.ndim != 3:
                raise ValueError("extra features must be an (S, A, k) table")
            extra.setflags(write=False)
            object.__setattr__(self, "extra", extra)

    @property
    def kind(self) -> str:
        return "compatible" if self.extra is None else "compatible_augmented"

    @property
    def dim(self) -> int:
        return self.n_score + (0 if self.extra is None else self.extra.shape[2])

    def extra_table(self, n_states: int, n_actions: int, terminal: int) -> np.ndarray:
        """The appended block as a contiguous (S, A, k) array (k may be 0)."""
        if self.extra is None:
            return np.zeros((n_states, n_actions, 0))
        out = np.array(self.extra)
        out[terminal] = 0.0
        return out

    def rows(self, policy: SoftmaxPolicy, states, actions, probs=None) -> np.ndarray:
        psi = policy.score_rows(states, actions, probs)
        if self.extra is None:
            return psi
        ext = self.extra[np.asarray(states), np.asarray(actions)]
        ext = np.where((np.asarray(states) == policy.terminal)[:, None], 0.0, ext)
        return np.hstack([psi, ext])

    def phi(self, policy: SoftmaxPolicy, x: int, u: int) -> np.ndarray:
        return self.rows(policy, [x], [u])[0]

    def table(self, policy: SoftmaxPolicy) -> np.ndarray:
        S, A = policy.index.shape
        xs, us = np.divmod(np.arange(S * A), A)
        return self.rows(policy, xs, us).reshape(S, A, self.dim)


def compatible_features(policy: SoftmaxPolicy, extra=None) -> FeatureMap:
    """phi = psi, optionally followed by user-supplied state-action features.

    The score block spans Span{psi}, so the compatibility condition holds for
    either variant.
    """
    return FeatureMap(policy.n_params, extra)


@dataclass(frozen=True)
class RankReport:
    rank: int
    dim: int
    singular_values: np.ndarray

    @property
    def deficient(self) -> bool:
        return self.rank < self.dim or self.dim == 0


def feature_matrix(fmap: FeatureMap, policy: SoftmaxPolicy, model: MdpModel) -> np.ndarray:
    """Rows phi(x, u) for nonterminal x in state-major order, (|X_nt| |U|, dim)."""
    table = fmap.table(policy)
    return table[model.nonterminal].reshape(model.nonterminal.size * model.n_actions, fmap.dim)


def check_rank(fmap: FeatureMap, policy: SoftmaxPolicy, model: MdpModel,
               rtol: float = RANK_RTOL) -> RankReport:
    """Numerical rank of the feature matrix at the current parameters."""
    Phi = feature_matrix(fmap, policy, model)
    if Phi.size == 0:
        return RankReport(0, fmap.dim, np.zeros(0))
    sv = np.linalg.svd(Phi, compute_uv=False)
    rank = int(np.sum(sv > rtol * sv[0])) if sv[0] > 0 else 0
    return RankReport(rank, fmap.dim, sv)
