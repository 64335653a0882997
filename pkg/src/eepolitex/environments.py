"""Benchmark MDPs and name-based lookup."""
from __future__ import annotations

import numpy as np

from .features import FeatureMap, deepsea_features, deepsea_state_index, tabular_features
from .mdp import Mdp, StochasticPolicy, policy_transition_matrix
from .solvers import is_unichain


def deepsea(N: int, goal_penalty: bool = False) -> Mdp:
    """N x N DeepSea grid with costs equal to negated rewards.

    Both actions move one row down (wrapping); action 0 moves left and
    action 1 right, clamped at the edges. The bottom-right cell pays 2N for
    either action. Elsewhere action 1 costs 1. With ``goal_penalty`` the
    action-1 cost is also charged at the goal.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    S, A = N * N, 2
    reward = np.zeros((S, A))
    trans = np.zeros((S, A, S))
    for i in range(N):
        for j in range(N):
            x = deepsea_state_index(N, i, j)
            down = (i + 1) % N
            trans[x, 0, deepsea_state_index(N, down, max(0, j - 1))] = 1.0
            trans[x, 1, deepsea_state_index(N, down, min(N - 1, j + 1))] = 1.0
            if i == N - 1 and j == N - 1:
                reward[x, :] = 2 * N
                if goal_penalty:
                    reward[x, 1] -= 1.0
            else:
                reward[x, 1] = -1.0
    return Mdp(-reward, trans, name=f"deepsea:N={N}", start_state=0)


def always_action_one_policy(N: int) -> StochasticPolicy:
    return StochasticPolicy.deterministic(np.ones(N * N, dtype=int), 2)


def deepsea_exploration_length(N: int) -> int:
    return max(1, N // 2)


def two_state_chain(p_flip: float, costs=(0.0, 1.0)) -> Mdp:
    """Symmetric two-state, one-action chain that flips with ``p_flip``."""
    if not 0.0 < p_flip <= 1.0:
        raise ValueError("p_flip must lie in (0, 1]")
    trans = np.array([[[1 - p_flip, p_flip]], [[p_flip, 1 - p_flip]]])
    cost = np.asarray(costs, dtype=float).reshape(2, 1)
    return Mdp(cost, trans, name=f"chain:p={p_flip}")


def random_unichain(
    S: int,
    A: int,
    sparsity: float = 1.0,
    cost_range=(0.0, 1.0),
    rng: np.random.Generator | None = None,
    mixture: float = 0.1,
    max_retries: int = 20,
) -> Mdp:
    """Random MDP whose every policy is unichain.

    Each transition row is a Dirichlet draw over a random support of size
    ``ceil(sparsity * S)``, mixed with the uniform distribution at weight
    ``mixture``. The uniform component makes every chain irreducible and
    uniformly mixing.
    """
    if S < 1 or A < 1:
        raise ValueError("S and A must be >= 1")
    if not 0.0 < sparsity <= 1.0:
        raise ValueError("sparsity must lie in (0, 1]")
    if not 0.0 <= mixture <= 1.0:
        raise ValueError("mixture must lie in [0, 1]")
    rng = np.random.default_rng() if rng is None else rng
    k = max(1, int(np.ceil(sparsity * S)))
    for _ in range(max_retries):
        trans = np.zeros((S, A, S))
        for x in range(S):
            for a in range(A):
                support = rng.choice(S, size=k, replace=False)
                trans[x, a, support] = rng.dirichlet(np.ones(k))
        trans = (1.0 - mixture) * trans + mixture / S
        trans /= trans.sum(axis=2, keepdims=True)
        lo, hi = cost_range
        cost = rng.uniform(lo, hi, size=(S, A))
        mdp = Mdp(cost, trans, name=f"random:S={S},A={A}")
        if is_unichain(policy_transition_matrix(mdp, StochasticPolicy.uniform(S, A))) and (
            mixture > 0 or _all_deterministic_unichain(mdp)
        ):
            return mdp
    raise RuntimeError("could not generate a unichain MDP")


def _all_deterministic_unichain(mdp: Mdp, limit: int = 4096) -> bool:
    S, A = mdp.cost.shape
    if A**S > limit:
        return True
    for code in range(A**S):
        actions = [(code // A**x) % A for x in range(S)]
        if not is_unichain(policy_transition_matrix(mdp, StochasticPolicy.deterministic(actions, A))):
            return False
    return True


def _parse_params(text: str) -> dict:
    params = {}
    for item in filter(None, text.split(",")):
        key, _, value = item.partition("=")
        params[key.strip()] = value.strip()
    return params


def make_env(spec: str) -> Mdp:
    """Build an environment from a name like ``deepsea:N=8`` or ``random:S=6,A=3,seed=1``."""
    name, _, rest = spec.partition(":")
    params = _parse_params(rest)
    try:
        if name == "deepsea":
            return deepsea(int(params.get("N", 4)), goal_penalty=params.get("goal_penalty", "0") in ("1", "true"))
        if name == "chain":
            costs = tuple(float(c) for c in params.get("costs", "0;1").split(";"))
            return two_state_chain(float(params.get("p", 0.5)), costs)
        if name == "random":
            rng = np.random.default_rng(int(params.get("seed", 0)))
            lo, hi = (float(c) for c in params.get("costs", "0;1").split(";"))
            mdp = random_unichain(
                int(params.get("S", 6)),
                int(params.get("A", 2)),
                float(params.get("sparsity", 1.0)),
                (lo, hi),
                rng,
                float(params.get("mixture", 0.1)),
            )
            return Mdp(mdp.cost, mdp.transition, name=spec)
    except (TypeError, ValueError) as err:
        raise ValueError(f"bad environment spec {spec!r}: {err}") from err
    raise ValueError(f"unknown environment {name!r}")


def default_features(mdp: Mdp, kind: str = "auto") -> FeatureMap:
    if kind == "tabular" or (kind == "auto" and not mdp.name.startswith("deepsea")):
        return tabular_features(mdp.num_states, mdp.num_actions)
    if kind in ("auto", "deepsea"):
        return deepsea_features(int(round(np.sqrt(mdp.num_states))))
    raise ValueError(f"unknown feature kind {kind!r}")
