"""Policy-producing learners.

All agents interact with one unbroken environment stream of exactly ``T``
steps and log every step to a :class:`~eepolitex.ledger.Recorder`.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .estimation import (
    QEstimate,
    RolloutBatch,
    Transitions,
    clip_estimate,
    lsmc_fit,
    lspe_fit,
)
from .features import FeatureMap, excitation
from .ledger import EXPLORE, TARGET, UNIFORM_ACTION, Recorder, RegretLedger
from .mdp import Mdp, Sampler, StochasticPolicy, substream
from .solvers import NotUnichainError, stationary

log = logging.getLogger(__name__)

EXPLORE_ID, UNIFORM_ID = 0, 1


def boltzmann_policy(summed_q: np.ndarray, eta: float, num_actions: int | None = None) -> StochasticPolicy:
    """pi(a|x) proportional to exp(-eta * q(x, a)).

    ``summed_q`` is either an (S, A) table or a linearized vector with
    ``num_actions`` given. The row minimum is subtracted before scaling,
    so shifting a row by a constant that is exact in floating point gives a
    bitwise-identical row.
    """
    if eta < 0:
        raise ValueError("eta must be >= 0")
    q = np.asarray(summed_q, dtype=float)
    if q.ndim == 1:
        if num_actions is None:
            raise ValueError("num_actions is required for a flat q vector")
        q = q.reshape(-1, num_actions)
    if not np.all(np.isfinite(q)):
        raise ValueError("q must be finite")
    weights = np.exp(-eta * (q - q.min(axis=1, keepdims=True)))
    return StochasticPolicy(weights / weights.sum(axis=1, keepdims=True))


@dataclass(frozen=True)
class Schedule:
    T: int
    n: int
    m: int
    s: int
    s_prime: int

    @property
    def phase_length(self) -> int:
        return self.m * (self.s + self.s_prime + 1)

    @property
    def phases_run(self) -> int:
        """Phases that fit in the step budget ``T``."""
        return min(self.n, self.T // self.phase_length)

    @property
    def tail(self) -> int:
        """Steps left after the last full phase, played by the final policy."""
        return self.T - self.phases_run * self.phase_length

    def segment_counts(self) -> dict:
        k = self.phases_run * self.m
        return {
            "explore": k * self.s_prime,
            "uniform_action": k,
            "target": k * self.s + self.tail,
        }


def make_schedule(T: int, n=None, m=None, s=None, s_prime=None) -> Schedule:
    """Phase schedule n = m = T^(2/5), s' = log T, s = T^(1/5) - s'.

    When ``T^(1/5)`` does not exceed ``log T`` (every practical T) the
    rollout length falls back to ``T^(1/5)`` and ``s'`` is capped at ``s``.
    Explicit arguments override the computed values.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    n_ = max(1, round(T**0.4))
    m_ = n_
    sp = max(1, math.ceil(math.log(T))) if s_prime is None else int(s_prime)
    root = round(T**0.2)
    if root > sp:
        s_ = max(1, root - sp)
    else:
        s_ = max(1, root)
        if s_prime is None:
            sp = min(sp, s_)
            # tiny T: keep the phase budget within a factor 4 of T
            while sp > 1 and n_ * m_ * (s_ + sp + 1) > 4 * T:
                sp -= 1
            if T > 1:
                log.info("T=%d too small for s' = log T; using s=%d, s'=%d", T, s_, sp)
    return Schedule(
        T,
        n_ if n is None else int(n),
        m_ if m is None else int(m),
        s_ if s is None else int(s),
        sp,
    )


@dataclass
class AgentConfig:
    lambda_kind: str = "mean_cost"
    visit_mode: str = "one_visit"
    eta: float | None = None
    eta_scale: float = 1.0
    w_max: float | None = None
    q_max: float | None = None
    ridge: float | None = None
    n: int | None = None
    m: int | None = None
    s: int | None = None
    s_prime: int | None = None
    noise_scale: float = 1.0
    lspe_step: float = 0.5
    lspe_iterations: int = 20
    value_iterations: int = 30
    excitation_floor: float = 1e-6

    @classmethod
    def from_dict(cls, doc: dict) -> "AgentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown agent config keys: {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def schedule(self, T: int) -> Schedule:
        return make_schedule(T, self.n, self.m, self.s, self.s_prime)


class EnvStream:
    """One continuous interaction with an MDP, logging every step."""

    def __init__(self, mdp: Mdp, rng: np.random.Generator, start: int | None = None,
                 recorder: Recorder | None = None):
        self.mdp = mdp
        self.sampler = Sampler(mdp, rng)
        self.state = mdp.start_state if start is None else int(start)
        self.recorder = Recorder() if recorder is None else recorder
        self._tables: dict[int, list] = {}

    @property
    def t(self) -> int:
        return len(self.recorder)

    def register(self, policy_id: int, policy: StochasticPolicy) -> None:
        self.recorder.policies[policy_id] = policy
        self._tables[policy_id] = Sampler.policy_table(policy)

    def run(self, policy_id: int, k: int, segment: int, phase: int):
        """Follow a registered policy for ``k`` steps; returns (states, actions, costs)."""
        table = self._tables[policy_id]
        sampler = self.sampler
        states, actions, costs = [0] * k, [0] * k, [0.0] * k
        x = self.state
        for i in range(k):
            a = sampler.action(table, x)
            states[i], actions[i] = x, a
            costs[i], x = sampler.step(x, a)
        self.state = x
        self.recorder.extend(states, actions, costs, segment, policy_id, phase)
        return states, actions, costs

    def uniform_step(self, phase: int):
        x = self.state
        a = self.sampler.uniform_action()
        c, self.state = self.sampler.step(x, a)
        self.recorder.extend([x], [a], [c], UNIFORM_ACTION, UNIFORM_ID, phase)
        return x, a, c


def collect_data(
    env: EnvStream,
    target_id: int,
    m: int,
    s: int,
    s_prime: int,
    phase: int = 0,
    lambda_kind: str = "mean_cost",
    explore_id: int = EXPLORE_ID,
) -> RolloutBatch:
    """Exploration segment, one uniform action, then a target rollout; m times.

    Policies are referenced by the ids registered on ``env``. With
    ``s_prime = 0`` the record starts wherever the stream currently is.
    """
    if m < 1 or s < 1 or s_prime < 0:
        raise ValueError("need m, s >= 1 and s_prime >= 0")
    A = env.mdp.num_actions
    xs, as_, c0, xp = [], [], [], []
    states = np.zeros((m, s), dtype=int)
    actions = np.zeros((m, s), dtype=int)
    costs = np.zeros((m, s))
    final = np.zeros(m, dtype=int)
    if UNIFORM_ID not in env.recorder.policies:
        env.register(UNIFORM_ID, StochasticPolicy.uniform(env.mdp.num_states, A))
    for j in range(m):
        if s_prime:
            env.run(explore_id, s_prime, EXPLORE, phase)
        x, a, c = env.uniform_step(phase)
        xs.append(x)
        as_.append(a)
        c0.append(c)
        xp.append(env.state)
        st, ac, co = env.run(target_id, s, TARGET, phase)
        states[j], actions[j], costs[j] = st, ac, co
        final[j] = env.state
    return RolloutBatch(
        np.asarray(xs, dtype=int),
        np.asarray(as_, dtype=int),
        np.asarray(c0, dtype=float),
        np.asarray(xp, dtype=int),
        states,
        actions,
        costs,
        final,
        A,
        lambda_kind,
    )


@dataclass
class PolitexState:
    """Running Politex policy: Boltzmann over the sum of clipped estimates."""

    features: FeatureMap
    eta: float = 0.0
    b: float | None = None
    q_max: float | None = None
    weight_history: list = field(default_factory=list)
    estimates: list = field(default_factory=list)
    summed_q: np.ndarray | None = None

    def __post_init__(self):
        if self.summed_q is None:
            self.summed_q = np.zeros(self.features.psi.shape[0])

    @property
    def phase_index(self) -> int:
        return len(self.weight_history)

    def policy(self) -> StochasticPolicy:
        return boltzmann_policy(self.summed_q, self.eta, self.features.num_actions)

    def calibrate(self, estimate: QEstimate, n: int, config: AgentConfig) -> None:
        """Fix the clipping range and temperature from the first estimate."""
        A = self.features.num_actions
        if config.q_max is not None:
            q_max = float(config.q_max)
        else:
            w_max = config.w_max
            if w_max is None:
                w_max = 1.5 * float(np.linalg.norm(estimate.weights))
            q_max = 2.0 * w_max * self.features.feature_bound
        if not q_max > 0:
            q_max = 1.0
        self.q_max = q_max
        self.b = -q_max / 2.0
        if config.eta is not None:
            self.eta = float(config.eta)
        else:
            self.eta = config.eta_scale * math.sqrt(8.0 * math.log(A) / n) / q_max

    def add(self, estimate: QEstimate) -> QEstimate:
        clipped = clip_estimate(estimate, self.b, self.q_max)
        raw = estimate.raw_values(self.features)
        outside = (raw < self.b) | (raw > self.b + self.q_max)
        clipped.diagnostics["clipped_fraction"] = float(np.mean(outside))
        self.weight_history.append(estimate.weights)
        self.estimates.append(clipped)
        self.summed_q = self.summed_q + clipped.values(self.features)
        return clipped


def _check_excitation(mdp, features, exploration_policy, floor) -> float | None:
    try:
        mu = stationary(mdp, exploration_policy).mu
    except NotUnichainError:
        log.warning("exploration policy is not unichain; excitation not checked")
        return None
    nu = (mu[:, None] * np.full(mdp.cost.shape, 1.0 / mdp.num_actions)).reshape(-1)
    sigma = excitation(features, nu)
    if sigma < floor:
        log.warning("exploration data excites the features only at level %.3g", sigma)
    return sigma


@dataclass
class RunResult:
    ledger: RegretLedger
    state: PolitexState | None
    schedule: Schedule
    info: dict = field(default_factory=dict)


def run_ee_politex(
    mdp: Mdp,
    features: FeatureMap,
    exploration_policy: StochasticPolicy | None,
    T: int,
    config: AgentConfig | None = None,
    seed: int = 0,
    stream_id: int = 0,
    schedule: Schedule | None = None,
) -> RunResult:
    """Politex with exploration segments and LSMC value estimates.

    ``exploration_policy=None`` (or ``s_prime=0``) gives plain Politex-LSMC
    whose rollouts start wherever the trajectory happens to be.
    """
    config = AgentConfig() if config is None else config
    schedule = config.schedule(T) if schedule is None else schedule
    if exploration_policy is None:
        schedule = Schedule(schedule.T, schedule.n, schedule.m, schedule.s, 0)
    env = EnvStream(mdp, substream(seed, stream_id))
    info = {}
    if schedule.s_prime:
        env.register(EXPLORE_ID, exploration_policy)
        info["excitation"] = _check_excitation(mdp, features, exploration_policy, config.excitation_floor)
    env.register(UNIFORM_ID, StochasticPolicy.uniform(mdp.num_states, mdp.num_actions))
    state = PolitexState(features)
    policy_id = 2
    for i in range(1, schedule.phases_run + 1):
        env.register(policy_id, state.policy())
        batch = collect_data(
            env, policy_id, schedule.m, schedule.s, schedule.s_prime, i, config.lambda_kind
        )
        est = lsmc_fit(batch, features, config.visit_mode, config.ridge)
        if state.q_max is None:
            state.calibrate(est, schedule.n, config)
        state.add(est)
        policy_id += 1
    env.register(policy_id, state.policy())
    if schedule.tail:
        env.run(policy_id, schedule.tail, TARGET, schedule.phases_run + 1)
    info.update({"eta": state.eta, "q_max": state.q_max, "final_policy_id": policy_id})
    return RunResult(env.recorder.ledger(mdp.name), state, schedule, info)


def run_politex_no_explore(mdp, features, T, config=None, seed=0, stream_id=0, schedule=None) -> RunResult:
    return run_ee_politex(mdp, features, None, T, config, seed, stream_id, schedule)


def run_politex_lspe(
    mdp: Mdp,
    features: FeatureMap,
    T: int,
    config: AgentConfig | None = None,
    seed: int = 0,
    stream_id: int = 0,
) -> RunResult:
    """Original Politex: each phase runs its policy on-policy and fits LSPE."""
    config = AgentConfig() if config is None else config
    schedule = config.schedule(T)
    n = schedule.n
    length = max(2, T // n)
    phases = min(n, T // length)
    schedule = Schedule(T, n, 1, length - 1, 0)
    env = EnvStream(mdp, substream(seed, stream_id))
    A = mdp.num_actions
    state = PolitexState(features)
    policy_id = 2
    w = None
    for i in range(1, phases + 1):
        env.register(policy_id, state.policy())
        st, ac, co = env.run(policy_id, length, TARGET, i)
        nxt_a = ac[1:]
        data = Transitions(
            np.asarray(st[:-1]), np.asarray(ac[:-1]), np.asarray(co[:-1]),
            np.asarray(st[1:]), np.asarray(nxt_a),
        )
        est = lspe_fit(data, features, None, config.lspe_iterations, config.lspe_step, w, config.ridge)
        w = est.weights
        if state.q_max is None:
            state.calibrate(est, n, config)
        state.add(est)
        policy_id += 1
    env.register(policy_id, state.policy())
    tail = T - env.t
    if tail:
        env.run(policy_id, tail, TARGET, phases + 1)
    info = {"eta": state.eta, "q_max": state.q_max, "phase_length": length}
    return RunResult(env.recorder.ledger(mdp.name), state, schedule, info)


def run_rlsvi_baseline(
    mdp: Mdp,
    features: FeatureMap,
    T: int,
    noise_scale: float = 1.0,
    config: AgentConfig | None = None,
    seed: int = 0,
    stream_id: int = 0,
) -> RunResult:
    """Online randomized least-squares value iteration (average-cost form).

    Each phase refits relative value iteration on all data so far, with
    Gaussian noise on the regression targets, then acts greedily on the
    perturbed estimate. ``noise_scale = 0`` gives greedy least-squares
    policy iteration.
    """
    config = AgentConfig() if config is None else config
    n = config.schedule(T).n
    length = max(1, T // n)
    phases = min(n, T // length)
    env = EnvStream(mdp, substream(seed, stream_id))
    noise_rng = substream(seed, stream_id + (1 << 24))
    S, A = mdp.cost.shape
    psi = features.psi
    d = features.dim
    counts = np.zeros((S * A, S))
    cost_sums = np.zeros(S * A)
    ref = mdp.start_state
    policy_id = 2
    weights = np.zeros(d)
    for i in range(1, phases + 2):
        q = (psi @ weights).reshape(S, A)
        greedy = np.argmin(q, axis=1)
        env.register(policy_id, StochasticPolicy.deterministic(greedy, A))
        k = length if i <= phases else T - env.t
        if k <= 0:
            break
        st, ac, co = env.run(policy_id, k, TARGET, i)
        pairs = np.asarray(st) * A + np.asarray(ac)
        nxt = np.append(np.asarray(st[1:], dtype=int), env.state)
        np.add.at(counts, (pairs, nxt), 1.0)
        np.add.at(cost_sums, pairs, np.asarray(co))
        policy_id += 1
        if i > phases:
            break
        weights = _perturbed_value_iteration(
            psi, counts, cost_sums, S, A, ref, noise_scale, config, noise_rng
        )
    info = {"noise_scale": noise_scale, "phase_length": length}
    return RunResult(env.recorder.ledger(mdp.name), None, Schedule(T, phases, 1, length, 0), info)


def _perturbed_value_iteration(psi, counts, cost_sums, S, A, ref, noise_scale, config, rng):
    n_sa = counts.sum(axis=1)
    d = psi.shape[1]
    scale = float(noise_scale)
    noise = scale * np.sqrt(n_sa) * rng.standard_normal(S * A)
    moment = psi.T @ (n_sa[:, None] * psi)
    reg = max(1.0, 1e-8 * np.trace(moment) / d)
    system = moment + reg * np.eye(d)
    w = np.zeros(d)
    for _ in range(config.value_iterations):
        v = (psi @ w).reshape(S, A).min(axis=1)
        target_sums = cost_sums + counts @ v - n_sa * v[ref] + noise
        w = np.linalg.solve(system, psi.T @ target_sums)
    return w
