"""Per-step cost log with policy attribution, regret and its decomposition."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .mdp import Mdp, StochasticPolicy, simulate
from .solvers import NotUnichainError, average_cost, optimal_average_cost_policy

EXPLORE, UNIFORM_ACTION, TARGET = 0, 1, 2
SEGMENT_NAMES = {EXPLORE: "explore", UNIFORM_ACTION: "uniform_action", TARGET: "target"}


class MissingLambdaError(ValueError):
    """Decomposition needs exact average costs attached to every policy."""


class Recorder:
    """Append-only step log shared by an environment stream."""

    def __init__(self):
        self.states: list[int] = []
        self.actions: list[int] = []
        self.costs: list[float] = []
        self.segments: list[int] = []
        self.policy_ids: list[int] = []
        self.phases: list[int] = []
        self.policies: dict[int, StochasticPolicy] = {}

    def __len__(self) -> int:
        return len(self.costs)

    def extend(self, states, actions, costs, segment: int, policy_id: int, phase: int) -> None:
        k = len(costs)
        self.states.extend(states)
        self.actions.extend(actions)
        self.costs.extend(costs)
        self.segments.extend([segment] * k)
        self.policy_ids.extend([policy_id] * k)
        self.phases.extend([phase] * k)

    def ledger(self, name: str = "") -> "RegretLedger":
        return RegretLedger(
            np.asarray(self.states, dtype=int),
            np.asarray(self.actions, dtype=int),
            np.asarray(self.costs, dtype=float),
            np.asarray(self.segments, dtype=np.int8),
            np.asarray(self.policy_ids, dtype=int),
            np.asarray(self.phases, dtype=int),
            dict(self.policies),
            name=name,
        )


@dataclass(eq=False)
class RegretLedger:
    states: np.ndarray
    actions: np.ndarray
    costs: np.ndarray
    segments: np.ndarray
    policy_ids: np.ndarray
    phases: np.ndarray
    policies: dict = field(default_factory=dict)
    lambdas: dict = field(default_factory=dict)
    lambda_star: float | None = None
    baseline_costs: np.ndarray | None = None
    name: str = ""

    @property
    def T(self) -> int:
        return len(self.costs)

    def segment_counts(self) -> dict:
        counts = np.bincount(self.segments, minlength=3)
        return {SEGMENT_NAMES[k]: int(counts[k]) for k in SEGMENT_NAMES}

    def exploration_mask(self) -> np.ndarray:
        """Steps not played by a learned target policy."""
        return self.segments != TARGET

    def attach_exact_lambdas(self, mdp: Mdp) -> "RegretLedger":
        """Attach lambda of every logged policy; multichain policies are left out."""
        for pid, policy in self.policies.items():
            if pid not in self.lambdas:
                try:
                    self.lambdas[pid] = average_cost(mdp, policy)
                except NotUnichainError:
                    continue
        return self

    def attach_baseline(
        self, mdp: Mdp, sampled: bool = False, seed: int = 0, stream_id: int = 1 << 20
    ) -> "RegretLedger":
        """Attach lambda* of the optimal policy and, optionally, a sampled baseline run."""
        opt = optimal_average_cost_policy(mdp)
        self.lambda_star = opt.lam
        if sampled:
            traj = simulate(mdp, opt.policy, mdp.start_state, self.T, seed, stream_id)
            self.baseline_costs = traj.costs
        return self

    def active_lambdas(self) -> np.ndarray:
        missing = set(np.unique(self.policy_ids).tolist()) - set(self.lambdas)
        if missing:
            raise MissingLambdaError(
                f"no exact average cost for policies {sorted(missing)[:5]}; "
                "call attach_exact_lambdas(mdp) first"
            )
        table = np.zeros(max(self.lambdas) + 1)
        for pid, lam in self.lambdas.items():
            table[pid] = lam
        return table[self.policy_ids]

    def baseline(self) -> np.ndarray:
        """Per-step baseline costs, exact-lambda substitution when none were sampled."""
        if self.baseline_costs is not None:
            if len(self.baseline_costs) != self.T:
                raise ValueError("baseline length does not match the ledger")
            return self.baseline_costs
        if self.lambda_star is None:
            raise ValueError("no baseline attached")
        return np.full(self.T, self.lambda_star)

    def to_csv(self, stream) -> None:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(
            ["t", "state", "action", "cost", "segment_kind", "policy_id", "cum_cost", "cum_regret"]
        )
        cum_cost = np.cumsum(self.costs)
        has_base = self.baseline_costs is not None or self.lambda_star is not None
        cum_regret = cum_cost - np.cumsum(self.baseline()) if has_base else None
        for t in range(self.T):
            writer.writerow(
                [
                    t + 1,
                    int(self.states[t]),
                    int(self.actions[t]),
                    repr(float(self.costs[t])),
                    SEGMENT_NAMES[int(self.segments[t])],
                    int(self.policy_ids[t]),
                    repr(float(cum_cost[t])),
                    repr(float(cum_regret[t])) if has_base else "",
                ]
            )

    def csv_text(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()


def regret(ledger: RegretLedger) -> float:
    """Agent's total cost minus the baseline's over the same horizon."""
    return float(np.sum(ledger.costs) - np.sum(ledger.baseline()))


@dataclass(frozen=True)
class Decomposition:
    exploration: float
    pseudo_regret: float
    agent_noise: float
    baseline_noise: float
    total: float

    @property
    def residual(self) -> float:
        return self.total - (self.exploration + self.pseudo_regret + self.agent_noise + self.baseline_noise)


def decompose(ledger: RegretLedger) -> Decomposition:
    """Split regret into exploration price, pseudo-regret and two noise sums.

    Exploration steps (explore and uniform-action segments) contribute
    ``lambda_active - lambda*`` to the exploration price; target steps give
    the pseudo-regret. The agent noise ``c_t - lambda_active`` and baseline
    noise ``lambda* - c*_t`` run over all steps, which makes the four terms
    sum to the regret exactly.
    """
    if ledger.lambda_star is None:
        raise MissingLambdaError("lambda* not attached; call attach_baseline(mdp)")
    lam_t = ledger.active_lambdas()
    explore = ledger.exploration_mask()
    gap = lam_t - ledger.lambda_star
    base = ledger.baseline()
    return Decomposition(
        exploration=float(np.sum(gap[explore])),
        pseudo_regret=float(np.sum(gap[~explore])),
        agent_noise=float(np.sum(ledger.costs - lam_t)),
        baseline_noise=float(np.sum(ledger.lambda_star - base)),
        total=regret(ledger),
    )


def average_cost_of(ledger: RegretLedger, segment: int | None = TARGET, tail: float = 1.0) -> float:
    """Mean cost over the last ``tail`` fraction of steps, optionally one segment kind."""
    start = int(round(ledger.T * (1.0 - tail)))
    costs = ledger.costs[start:]
    if segment is not None:
        costs = costs[ledger.segments[start:] == segment]
    return float(np.mean(costs)) if len(costs) else float("nan")
