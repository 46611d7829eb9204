import numpy as np

from varac.features import check_rank, compatible_features
from varac.mdp import SoftmaxPolicy
from varac.models import random_mdp


def test_compatible_features_equal_score_exactly(geo_model):
    m = random_mdp(np.random.default_rng(4))
    rng = np.random.default_rng(5)
    for _ in range(20):
        pol = SoftmaxPolicy.tabular(m, rng.uniform(-2, 2, 10))
        fmap = compatible_features(pol)
        np.testing.assert_array_equal(fmap.table(pol), pol.score_table())
        assert fmap.kind == "compatible" and fmap.dim == 10


def test_geo_feature_values(geo_model):
    pol = SoftmaxPolicy.tabular(geo_model)
    fmap = compatible_features(pol)
    np.testing.assert_array_equal(fmap.phi(pol, 0, 0), [0.5])
    np.testing.assert_array_equal(fmap.phi(pol, 0, 1), [-0.5])


def test_full_rank_on_random_model():
    m = random_mdp(np.random.default_rng(4))
    pol = SoftmaxPolicy.tabular(m, np.random.default_rng(1).uniform(-2, 2, 10))
    rep = check_rank(compatible_features(pol), pol, m)
    assert rep.rank == 10 and not rep.deficient


def test_over_parameterised_policy_is_rank_deficient():
    m = random_mdp(np.random.default_rng(4))
    pol = SoftmaxPolicy.tabular(m, reference=None)
    rep = check_rank(compatible_features(pol), pol, m)
    assert rep.dim == 15 and rep.rank == 10 and rep.deficient


def test_single_action_model_has_no_features(chain_model):
    pol = SoftmaxPolicy.tabular(chain_model)
    rep = check_rank(compatible_features(pol), pol, chain_model)
    assert rep.dim == 0 and rep.deficient


def test_augmented_features(geo_model):
    pol = SoftmaxPolicy.tabular(geo_model)
    extra = np.ones((2, 2, 1))
    fmap = compatible_features(pol, extra)
    assert fmap.kind == "compatible_augmented" and fmap.dim == 2
    table = fmap.table(pol)
    np.testing.assert_array_equal(table[0, :, 1], [1.0, 1.0])
    np.testing.assert_array_equal(table[1], 0.0)
    assert check_rank(fmap, pol, geo_model).rank == 2
