import numpy as np
import pytest

from eepolitex import (
    StochasticPolicy,
    always_action_one_policy,
    deepsea,
    exact_values,
    make_env,
    mixing_coefficient,
    random_unichain,
    stationary,
    two_state_chain,
)
from eepolitex.environments import default_features
from eepolitex.features import deepsea_features, deepsea_state_index, excitation
from eepolitex.mdp import policy_transition_matrix
from eepolitex.solvers import is_unichain


def test_deepsea_two_action_one_reaches_goal():
    mdp = deepsea(2)
    start = deepsea_state_index(2, 0, 0)
    goal = deepsea_state_index(2, 1, 1)
    assert mdp.transition[start, 1, goal] == 1.0
    np.testing.assert_array_equal(mdp.cost[goal], [-4.0, -4.0])


def test_deepsea_row_wraps_and_column_floors():
    mdp = deepsea(4)
    assert mdp.transition[deepsea_state_index(4, 3, 0), 0, deepsea_state_index(4, 0, 0)] == 1.0


@pytest.mark.parametrize("N", [1, 2, 3, 5])
def test_deepsea_exhaustive_transitions(N):
    mdp = deepsea(N)
    for i in range(N):
        for j in range(N):
            x = deepsea_state_index(N, i, j)
            left = deepsea_state_index(N, (i + 1) % N, max(0, j - 1))
            right = deepsea_state_index(N, (i + 1) % N, min(N - 1, j + 1))
            assert mdp.transition[x, 0, left] == 1.0
            assert mdp.transition[x, 1, right] == 1.0
            goal = i == N - 1 and j == N - 1
            expected = [-2.0 * N, -2.0 * N] if goal else [0.0, 1.0]
            np.testing.assert_array_equal(mdp.cost[x], expected)


@pytest.mark.parametrize("N", [2, 3, 4, 6, 8])
def test_always_action_one_average_reward(N):
    lam = exact_values(deepsea(N), always_action_one_policy(N)).lam
    assert -lam == pytest.approx((N + 1) / N, abs=1e-10)


def test_goal_penalty_flag():
    mdp = deepsea(3, goal_penalty=True)
    goal = deepsea_state_index(3, 2, 2)
    np.testing.assert_array_equal(mdp.cost[goal], [-6.0, -5.0])


def test_always_one_policy_is_deterministic():
    probs = always_action_one_policy(3).probs
    np.testing.assert_array_equal(probs[:, 1], 1.0)


def test_always_one_stationary_on_last_column():
    N = 5
    mu = stationary(deepsea(N), always_action_one_policy(N)).mu.reshape(N, N)
    np.testing.assert_allclose(mu[:, N - 1], 1 / N, atol=1e-12)
    assert mu[:, : N - 1].sum() == pytest.approx(0.0, abs=1e-12)


def test_always_one_with_uniform_perturbation_excites_features():
    N = 4
    mdp = deepsea(N)
    pol = StochasticPolicy(0.5 * always_action_one_policy(N).probs + 0.25)
    assert excitation(deepsea_features(N), stationary(mdp, pol).nu) > 0


def test_random_unichain_fully_mixed_rows_are_uniform(rng):
    mdp = random_unichain(4, 2, mixture=1.0, rng=rng)
    np.testing.assert_allclose(mdp.transition, 0.25)
    mix = mixing_coefficient(mdp, StochasticPolicy.uniform(4, 2))
    assert mix.factor == pytest.approx(0.0, abs=1e-12)


def test_random_unichain_single_state(rng):
    mdp = random_unichain(1, 3, rng=rng)
    assert mdp.transition.shape == (1, 3, 1)


def test_random_unichain_many_instances(rng):
    for _ in range(100):
        S = int(rng.integers(1, 8))
        A = int(rng.integers(1, 4))
        mdp = random_unichain(S, A, sparsity=float(rng.uniform(0.2, 1.0)), cost_range=(-1, 2), rng=rng)
        pol = StochasticPolicy(rng.dirichlet(np.ones(A), size=S))
        assert is_unichain(policy_transition_matrix(mdp, pol))
        assert not mixing_coefficient(mdp, pol).infinite
        assert mdp.cost.min() >= -1 and mdp.cost.max() <= 2


def test_random_unichain_bad_arguments():
    with pytest.raises(ValueError):
        random_unichain(3, 2, sparsity=0.0)
    with pytest.raises(ValueError):
        random_unichain(0, 2)


def test_two_state_chain_closed_forms():
    ev = exact_values(two_state_chain(1.0), StochasticPolicy.uniform(2, 1))
    np.testing.assert_allclose(ev.v, [-0.25, 0.25], atol=1e-12)
    half = two_state_chain(0.5)
    np.testing.assert_allclose(half.transition[:, 0, :], 0.5)
    assert mixing_coefficient(half, StochasticPolicy.uniform(2, 1)).factor == pytest.approx(0.0, abs=1e-12)
    flat = exact_values(two_state_chain(0.3, costs=(2.0, 2.0)), StochasticPolicy.uniform(2, 1))
    np.testing.assert_allclose(flat.v, 0.0, atol=1e-12)


@pytest.mark.parametrize("p", [0.1, 0.4, 0.8])
def test_two_state_chain_general_value(p):
    # V = (c - lam)/(2p) in the symmetric chain with costs (0, 1)
    ev = exact_values(two_state_chain(p), StochasticPolicy.uniform(2, 1))
    np.testing.assert_allclose(ev.v, [-0.25 / p, 0.25 / p], atol=1e-12)


def test_two_state_chain_rejects_zero_flip():
    with pytest.raises(ValueError):
        two_state_chain(0.0)


def test_make_env_names():
    assert make_env("deepsea:N=3").num_states == 9
    chain = make_env("chain:p=0.3,costs=1;4")
    np.testing.assert_array_equal(chain.cost[:, 0], [1.0, 4.0])
    a = make_env("random:S=5,A=3,seed=2")
    b = make_env("random:S=5,A=3,seed=2")
    np.testing.assert_array_equal(a.transition, b.transition)
    assert a.cost.shape == (5, 3)
    with pytest.raises(ValueError):
        make_env("maze:N=3")
    with pytest.raises(ValueError):
        make_env("deepsea:N=x")


def test_default_features_choice():
    assert default_features(deepsea(3)).dim == 12
    assert default_features(two_state_chain(0.5)).dim == 2
