import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from eepolitex import StochasticPolicy, always_action_one_policy, deepsea, stationary
from eepolitex.features import (
    FeatureMap,
    deepsea_features,
    deepsea_state_index,
    excitation,
    tabular_features,
)


def test_tabular_single_pair():
    assert tabular_features(1, 1).psi.tolist() == [[1.0]]


def test_tabular_two_by_two_is_identity():
    np.testing.assert_array_equal(tabular_features(2, 2).psi, np.eye(4))


@given(st.integers(1, 6), st.integers(1, 4))
def test_tabular_is_orthonormal(S, A):
    psi = tabular_features(S, A).psi
    np.testing.assert_array_equal(psi.T @ psi, np.eye(S * A))


def test_feature_bound_is_max_row_norm():
    psi = np.array([[3.0, 4.0], [1.0, 0.0], [0.0, -2.0], [1.0, 1.0]])
    fm = FeatureMap(psi, 2, 2)
    assert fm.feature_bound == pytest.approx(5.0, abs=1e-12)
    assert fm.dim == 2


def test_non_finite_features_rejected():
    with pytest.raises(ValueError):
        FeatureMap(np.array([[np.inf]]), 1, 1)


def test_json_round_trip(rng):
    fm = FeatureMap(rng.normal(size=(6, 4)), 3, 2)
    back = FeatureMap.from_json(fm.to_json())
    np.testing.assert_array_equal(back.psi, fm.psi)


def test_deepsea_one_by_one():
    fm = deepsea_features(1)
    assert fm.dim == 4
    np.testing.assert_array_equal(fm.psi, [[1, 1, 0, 0], [0, 0, 1, 1]])


def test_deepsea_block_layout():
    N = 4
    vec = deepsea_features(N).vector(deepsea_state_index(N, 2, 3), 1)
    expected = np.zeros(16)
    expected[2 * N + 2] = 1.0
    expected[2 * N + N + 3] = 1.0
    np.testing.assert_array_equal(vec, expected)


@pytest.mark.parametrize("N", [1, 2, 5, 8])
def test_deepsea_two_ones_per_row(N):
    psi = deepsea_features(N).psi
    assert psi.shape == (2 * N * N, 4 * N)
    np.testing.assert_array_equal(psi.sum(axis=1), 2.0)
    assert set(np.unique(psi)) == {0.0, 1.0}


def test_excitation_tabular_uniform():
    assert excitation(tabular_features(3, 2), np.full(6, 1 / 6)) == pytest.approx(1 / 6)


@given(st.integers(1, 5), st.integers(1, 3), st.integers(0, 1000))
def test_excitation_tabular_is_min_weight(S, A, seed):
    nu = np.random.default_rng(seed).dirichlet(np.ones(S * A))
    assert excitation(tabular_features(S, A), nu) == pytest.approx(nu.min(), abs=1e-12)


def test_excitation_point_mass_is_zero():
    nu = np.zeros(6)
    nu[2] = 1.0
    assert excitation(tabular_features(3, 2), nu) == 0.0


def test_excitation_nonnegative_and_zero_iff_rank_deficient(rng):
    fm = FeatureMap(rng.normal(size=(6, 3)), 3, 2)
    nu = rng.dirichlet(np.ones(6))
    assert excitation(fm, nu) > 0
    nu[:4] = 0.0
    nu /= nu.sum()
    # two weighted rows cannot span three dimensions
    assert excitation(fm, nu) == 0.0


def test_redundant_feature_columns_do_not_zero_excitation(rng):
    psi = rng.normal(size=(6, 2))
    wide = np.column_stack([psi, psi[:, 0] - psi[:, 1]])
    nu = rng.dirichlet(np.ones(6))
    narrow_sigma = excitation(FeatureMap(psi, 3, 2), nu)
    wide_sigma = excitation(FeatureMap(wide, 3, 2), nu)
    assert wide_sigma > 0
    # oracle: min over unit w in the row space of w^T M w
    basis = np.linalg.svd(wide, full_matrices=False)[2][:2].T
    M = wide.T @ (nu[:, None] * wide)
    assert wide_sigma == pytest.approx(np.linalg.eigvalsh(basis.T @ M @ basis)[0], abs=1e-12)
    assert narrow_sigma > 0


def test_excitation_rejects_non_distribution():
    with pytest.raises(ValueError):
        excitation(tabular_features(1, 2), np.array([0.7, 0.7]))


def test_deepsea_mixed_policy_excites_block_features():
    N = 4
    mdp = deepsea(N)
    mixed = StochasticPolicy(
        0.5 * always_action_one_policy(N).probs + 0.5 * StochasticPolicy.uniform(N * N, 2).probs
    )
    nu = stationary(mdp, mixed).nu
    fm = deepsea_features(N)
    sigma = excitation(fm, nu)
    # block features carry two null directions (row sums equal column sums
    # inside each action block); the oracle drops them explicitly
    u, sv, vt = np.linalg.svd(fm.psi)
    assert np.sum(sv > 1e-10) == fm.dim - 2
    basis = vt[: fm.dim - 2].T
    oracle = np.linalg.eigh(basis.T @ fm.psi.T @ np.diag(nu) @ fm.psi @ basis)[0][0]
    assert sigma > 0
    assert sigma == pytest.approx(oracle, abs=1e-12)
