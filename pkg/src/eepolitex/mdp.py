"""Finite MDPs, stochastic policies and trajectory simulation.

State-action pairs are linearized as ``x * A + a`` everywhere in the package.
"""
from __future__ import annotations

import json
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

CONSTRUCTION_TOL = 1e-12
DERIVED_TOL = 1e-10


class ConfigurationError(ValueError):
    """Raised when objects of incompatible shapes are combined."""


def _check_rows(table: np.ndarray, tol: float, what: str) -> None:
    if np.any(table < 0):
        raise ValueError(f"{what} has negative entries")
    sums = table.sum(axis=-1)
    err = np.max(np.abs(sums - 1.0))
    if err > tol:
        raise ValueError(f"{what} rows must sum to 1 (max deviation {err:.3g})")


@dataclass(frozen=True, eq=False)
class Mdp:
    """Ground-truth dynamics: ``cost[x, a]`` and ``transition[x, a, x']``."""

    cost: np.ndarray
    transition: np.ndarray
    name: str = "mdp"
    start_state: int = 0

    def __post_init__(self):
        cost = np.array(self.cost, dtype=float)
        trans = np.array(self.transition, dtype=float)
        if cost.ndim != 2:
            raise ConfigurationError("cost must be a (S, A) table")
        S, A = cost.shape
        if S < 1 or A < 1:
            raise ConfigurationError("need at least one state and one action")
        if trans.shape != (S, A, S):
            raise ConfigurationError(f"transition must have shape {(S, A, S)}, got {trans.shape}")
        if not np.all(np.isfinite(cost)):
            raise ValueError("cost values must be finite")
        _check_rows(trans, CONSTRUCTION_TOL, "transition")
        if not 0 <= self.start_state < S:
            raise ConfigurationError("start_state out of range")
        cost.setflags(write=False)
        trans.setflags(write=False)
        object.__setattr__(self, "cost", cost)
        object.__setattr__(self, "transition", trans)

    @property
    def num_states(self) -> int:
        return self.cost.shape[0]

    @property
    def num_actions(self) -> int:
        return self.cost.shape[1]

    @property
    def num_pairs(self) -> int:
        return self.cost.size

    def cost_vector(self) -> np.ndarray:
        """Costs as a length-SA vector in linearized order."""
        return self.cost.reshape(-1)

    def to_dict(self) -> dict:
        return {
            "num_states": self.num_states,
            "num_actions": self.num_actions,
            "cost": self.cost.reshape(-1).tolist(),
            "transition": self.transition.reshape(-1).tolist(),
        }

    def to_json(self) -> str:
        # repr-based float formatting in json gives an exact round trip
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc: dict, name: str = "mdp") -> "Mdp":
        S, A = int(doc["num_states"]), int(doc["num_actions"])
        cost = np.asarray(doc["cost"], dtype=float).reshape(S, A)
        trans = np.asarray(doc["transition"], dtype=float).reshape(S, A, S)
        return cls(cost, trans, name=name, start_state=int(doc.get("start_state", 0)))

    @classmethod
    def from_json(cls, text: str, name: str = "mdp") -> "Mdp":
        return cls.from_dict(json.loads(text), name=name)


@dataclass(frozen=True, eq=False)
class StochasticPolicy:
    """Per-state action distribution ``probs[x, a]``."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.array(self.probs, dtype=float)
        if probs.ndim != 2:
            raise ConfigurationError("policy table must be (S, A)")
        _check_rows(probs, CONSTRUCTION_TOL, "policy")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @property
    def num_states(self) -> int:
        return self.probs.shape[0]

    @property
    def num_actions(self) -> int:
        return self.probs.shape[1]

    @classmethod
    def uniform(cls, S: int, A: int) -> "StochasticPolicy":
        return cls(np.full((S, A), 1.0 / A))

    @classmethod
    def deterministic(cls, actions, A: int) -> "StochasticPolicy":
        actions = np.asarray(actions, dtype=int)
        probs = np.zeros((actions.size, A))
        probs[np.arange(actions.size), actions] = 1.0
        return cls(probs)

    def state_action_weights(self, mu: np.ndarray) -> np.ndarray:
        """nu(x, a) = mu(x) pi(a|x), linearized."""
        return (np.asarray(mu)[:, None] * self.probs).reshape(-1)


def _check_compatible(mdp: Mdp, policy: StochasticPolicy) -> None:
    if policy.probs.shape != mdp.cost.shape:
        raise ConfigurationError(
            f"policy shape {policy.probs.shape} does not match MDP {mdp.cost.shape}"
        )


def policy_transition_matrix(mdp: Mdp, policy: StochasticPolicy) -> np.ndarray:
    """State transition matrix P_pi[x, x'] = sum_a pi(a|x) P(x'|x, a)."""
    _check_compatible(mdp, policy)
    return np.einsum("xa,xay->xy", policy.probs, mdp.transition)


def policy_costs(mdp: Mdp, policy: StochasticPolicy) -> np.ndarray:
    """Expected one-step cost per state, c_pi(x)."""
    _check_compatible(mdp, policy)
    return np.sum(policy.probs * mdp.cost, axis=1)


def state_action_kernel(mdp: Mdp, policy: StochasticPolicy) -> np.ndarray:
    """(SA x SA) kernel H_pi[(x,a), (x',a')] = P(x'|x,a) pi(a'|x')."""
    _check_compatible(mdp, policy)
    S, A = mdp.cost.shape
    H = mdp.transition[:, :, :, None] * policy.probs[None, None, :, :]
    return H.reshape(S * A, S * A)


# -- random streams ---------------------------------------------------------

def substream(seed: int, stream_id: int) -> np.random.Generator:
    """Counter-based substream ``stream_id`` of root ``seed``.

    Streams with different ids are statistically independent, so runs split
    across workers reproduce the sequential result.
    """
    return np.random.Generator(np.random.Philox(key=int(seed), counter=[0, 0, 0, int(stream_id)]))


class Sampler:
    """Fast single-step sampling from cumulative tables.

    Per-step ``rng.choice`` is far too slow for million-step runs, so the
    tables are held as python lists and uniforms are drawn in blocks.
    """

    def __init__(self, mdp: Mdp, rng: np.random.Generator, block: int = 4096):
        self.mdp = mdp
        self.rng = rng
        self.block = block
        self._cost = mdp.cost.tolist()
        cum = np.cumsum(mdp.transition, axis=2)
        cum[..., -1] = np.inf
        self._cum_p = [[row.tolist() for row in table] for table in cum]
        self._deterministic = [
            [int(np.argmax(row)) if np.max(row) == 1.0 else -1 for row in table]
            for table in mdp.transition
        ]
        self._buf: list[float] = []
        self._pos = 0

    def uniform(self) -> float:
        if self._pos >= len(self._buf):
            self._buf = self.rng.random(self.block).tolist()
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return u

    @staticmethod
    def policy_table(policy: StochasticPolicy) -> list[list[float]]:
        cum = np.cumsum(policy.probs, axis=1)
        cum[:, -1] = np.inf
        return cum.tolist()

    def action(self, table: list[list[float]], x: int) -> int:
        row = table[x]
        if len(row) == 1:
            return 0
        return bisect_right(row, self.uniform())

    def uniform_action(self) -> int:
        A = self.mdp.num_actions
        return min(int(self.uniform() * A), A - 1)

    def step(self, x: int, a: int) -> tuple[float, int]:
        det = self._deterministic[x][a]
        if det >= 0:
            return self._cost[x][a], det
        return self._cost[x][a], bisect_right(self._cum_p[x][a], self.uniform())


@dataclass(frozen=True, eq=False)
class Trajectory:
    start_state: int
    actions: np.ndarray
    costs: np.ndarray
    next_states: np.ndarray
    rng_stream_id: int = 0

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def states(self) -> np.ndarray:
        """States at which each action was taken."""
        return np.concatenate(([self.start_state], self.next_states[:-1])).astype(int)

    @property
    def final_state(self) -> int:
        return int(self.next_states[-1]) if len(self) else self.start_state


def rollout(sampler: Sampler, table, start: int, num_steps: int, stream_id: int = 0) -> Trajectory:
    actions = [0] * num_steps
    costs = [0.0] * num_steps
    nxt = [0] * num_steps
    x = start
    for k in range(num_steps):
        a = sampler.action(table, x)
        c, x = sampler.step(x, a)
        actions[k], costs[k], nxt[k] = a, c, x
    return Trajectory(
        start,
        np.asarray(actions, dtype=int),
        np.asarray(costs, dtype=float),
        np.asarray(nxt, dtype=int),
        stream_id,
    )


def simulate(
    mdp: Mdp,
    policy: StochasticPolicy,
    start: int,
    num_steps: int,
    seed: int = 0,
    stream_id: int = 0,
) -> Trajectory:
    """Run ``policy`` from ``start`` for ``num_steps`` steps.

    A pure function of its arguments: the randomness is the substream
    ``(seed, stream_id)``.
    """
    _check_compatible(mdp, policy)
    if num_steps < 0:
        raise ValueError("num_steps must be >= 0")
    if not 0 <= start < mdp.num_states:
        raise ConfigurationError("start state out of range")
    sampler = Sampler(mdp, substream(seed, stream_id))
    return rollout(sampler, Sampler.policy_table(policy), start, num_steps, stream_id)
