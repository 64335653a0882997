"""Action-value estimators from sampled data.

Least-squares Monte-Carlo (LSMC) regresses rollout returns onto features;
LSTD and LSPE solve the empirical projected Bellman equation and serve as
baselines.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import logging

import numpy as np

from .features import FeatureMap
from .mdp import Trajectory

log = logging.getLogger(__name__)

LAMBDA_KINDS = ("last_cost", "mean_cost", "rollout_mean")
VISIT_MODES = ("one_visit", "first_visit", "every_visit")


@dataclass(frozen=True, eq=False)
class RolloutBatch:
    """Data from one call of the collection procedure.

    Record ``j`` holds the exploration state ``x[j]``, the uniformly drawn
    action ``a[j]`` with its cost, the landing state ``x_prime[j]`` and a
    length-``s`` target-policy rollout starting there. Rollout cost ``k``
    (1-based) is the cost of the k-th step after leaving ``x_prime``.
    """

    x: np.ndarray
    a: np.ndarray
    first_cost: np.ndarray
    x_prime: np.ndarray
    states: np.ndarray
    actions: np.ndarray
    costs: np.ndarray
    final_state: np.ndarray
    num_actions: int
    lambda_kind: str = "mean_cost"

    def __post_init__(self):
        if self.lambda_kind not in LAMBDA_KINDS:
            raise ValueError(f"lambda_kind must be one of {LAMBDA_KINDS}")
        m = len(self.x)
        if self.costs.ndim != 2 or self.costs.shape[0] != m:
            raise ValueError("rollout arrays must be (m, s)")
        if self.costs.shape[1] < 1:
            raise ValueError("rollouts must have length s >= 1")
        if self.states.shape != self.costs.shape or self.actions.shape != self.costs.shape:
            raise ValueError("rollout arrays must share one shape")

    @property
    def m(self) -> int:
        return len(self.x)

    @property
    def s(self) -> int:
        return self.costs.shape[1]

    def rollout(self, j: int) -> Trajectory:
        nxt = np.append(self.states[j, 1:], self.final_state[j])
        return Trajectory(int(self.x_prime[j]), self.actions[j], self.costs[j], nxt, j)

    def with_lambda_kind(self, kind: str) -> "RolloutBatch":
        return replace(self, lambda_kind=kind)

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "s": self.s,
            "num_actions": self.num_actions,
            "lambda_kind": self.lambda_kind,
            "x": self.x.tolist(),
            "a": self.a.tolist(),
            "first_cost": self.first_cost.tolist(),
            "x_prime": self.x_prime.tolist(),
            "states": self.states.tolist(),
            "actions": self.actions.tolist(),
            "costs": self.costs.tolist(),
            "final_state": self.final_state.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RolloutBatch":
        return cls(
            np.asarray(doc["x"], dtype=int),
            np.asarray(doc["a"], dtype=int),
            np.asarray(doc["first_cost"], dtype=float),
            np.asarray(doc["x_prime"], dtype=int),
            np.asarray(doc["states"], dtype=int).reshape(doc["m"], doc["s"]),
            np.asarray(doc["actions"], dtype=int).reshape(doc["m"], doc["s"]),
            np.asarray(doc["costs"], dtype=float).reshape(doc["m"], doc["s"]),
            np.asarray(doc["final_state"], dtype=int),
            int(doc["num_actions"]),
            doc["lambda_kind"],
        )


def lambda_estimates(batch: RolloutBatch) -> np.ndarray:
    """Per-record average-cost estimate used to centre the returns.

    ``last_cost`` takes the final rollout cost, ``mean_cost`` the mean of
    every rollout cost in the batch, and ``rollout_mean`` the mean of the
    record's own rollout. The last one makes the centred rollout sum vanish
    identically and is kept only for comparison.
    """
    if batch.s < 1:
        raise ValueError("rollouts must have length >= 1")
    if batch.lambda_kind == "last_cost":
        return batch.costs[:, -1].copy()
    if batch.lambda_kind == "mean_cost":
        return np.full(batch.m, batch.costs.mean())
    return batch.costs.mean(axis=1)


def regression_targets(batch: RolloutBatch, visit_mode: str = "one_visit"):
    """Regression rows as ``(pair_index, target)`` arrays.

    The one-visit row of record j is
    ``c(x_j, a_j) - lam_j + sum_k (c_k - lam_j)``. First- and every-visit
    modes add rows for pairs met inside the rollout, each with the centred
    return that follows it.
    """
    if visit_mode not in VISIT_MODES:
        raise ValueError(f"visit_mode must be one of {VISIT_MODES}")
    if batch.m == 0:
        raise ValueError("empty batch")
    lam = lambda_estimates(batch)
    A = batch.num_actions
    pairs = np.concatenate(
        [(batch.x * A + batch.a)[:, None], batch.states * A + batch.actions], axis=1
    )
    costs = np.concatenate([batch.first_cost[:, None], batch.costs], axis=1) - lam[:, None]
    returns = np.cumsum(costs[:, ::-1], axis=1)[:, ::-1]
    if visit_mode == "one_visit":
        return pairs[:, 0].copy(), returns[:, 0].copy()
    if visit_mode == "every_visit":
        return pairs.reshape(-1), returns.reshape(-1)
    keep = np.zeros(pairs.shape, dtype=bool)
    for j in range(batch.m):
        _, first = np.unique(pairs[j], return_index=True)
        keep[j, first] = True
    return pairs[keep], returns[keep]


@dataclass(frozen=True, eq=False)
class QEstimate:
    weights: np.ndarray
    q_max: float | None = None
    b: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    def raw_values(self, features: FeatureMap) -> np.ndarray:
        return features.psi @ self.weights

    def values(self, features: FeatureMap) -> np.ndarray:
        """Q-hat over all pairs, clamped to [b, b + q_max] when clipping is set."""
        q = self.raw_values(features)
        if self.q_max is None:
            return q
        return np.clip(q, self.b, self.b + self.q_max)

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "q_max": self.q_max,
            "b": self.b,
            "diagnostics": self.diagnostics,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def clip_estimate(estimate: QEstimate, b: float, q_max: float) -> QEstimate:
    if q_max <= 0:
        raise ValueError("q_max must be positive")
    return replace(estimate, b=float(b), q_max=float(q_max), diagnostics=dict(estimate.diagnostics))


def default_ridge(moment: np.ndarray) -> float:
    return 1e-8 * float(np.trace(moment)) / moment.shape[0]


def fit_linear(pairs, targets, features: FeatureMap, ridge: float | None = None) -> QEstimate:
    """Least-squares fit of ``targets`` on the features of ``pairs``.

    Rows are aggregated per pair, so the cost is independent of the number
    of rows. ``ridge=None`` uses a tiny trace-scaled stabilizer; ``ridge=0``
    gives the minimum-norm least-squares solution.
    """
    pairs = np.asarray(pairs, dtype=int)
    targets = np.asarray(targets, dtype=float)
    n = len(pairs)
    if n == 0:
        raise ValueError("no regression rows")
    num_pairs = features.psi.shape[0]
    counts = np.bincount(pairs, minlength=num_pairs).astype(float)
    sums = np.bincount(pairs, weights=targets, minlength=num_pairs)
    psi = features.psi
    moment = psi.T @ (counts[:, None] * psi) / n
    rhs = psi.T @ sums / n
    lam = default_ridge(moment) if ridge is None else float(ridge)
    if lam > 0:
        w = np.linalg.solve(moment + lam * np.eye(len(rhs)), rhs)
    else:
        seen = counts > 0
        root = np.sqrt(counts[seen] / n)
        w, *_ = np.linalg.lstsq(
            root[:, None] * psi[seen], sums[seen] / counts[seen] * root, rcond=None
        )
    with np.errstate(divide="ignore"):
        cond = float(np.linalg.cond(moment))
    diag = {"rows": int(n), "ridge": lam, "moment_condition": cond}
    return QEstimate(w, diagnostics=diag)


def lsmc_fit(
    batch: RolloutBatch,
    features: FeatureMap,
    visit_mode: str = "one_visit",
    ridge: float | None = None,
) -> QEstimate:
    pairs, targets = regression_targets(batch, visit_mode)
    est = fit_linear(pairs, targets, features, ridge)
    est.diagnostics.update(
        {"estimator": "lsmc", "visit_mode": visit_mode, "lambda_kind": batch.lambda_kind,
         "m": batch.m, "s": batch.s}
    )
    return est


@dataclass(frozen=True, eq=False)
class Transitions:
    """On-policy transition tuples (x, a, c, x', a').

    Optional ``weights`` replace sample counts, e.g. for an exact enumeration
    of transitions weighted by their stationary probabilities.
    """

    x: np.ndarray
    a: np.ndarray
    cost: np.ndarray
    x_next: np.ndarray
    a_next: np.ndarray
    weights: np.ndarray | None = None

    def probabilities(self) -> np.ndarray:
        if self.weights is None:
            return np.full(len(self.x), 1.0 / len(self.x))
        w = np.asarray(self.weights, dtype=float)
        return w / w.sum()

    def __len__(self) -> int:
        return len(self.x)


def _td_statistics(data: Transitions, features: FeatureMap, lambda_hat: float):
    A = features.num_actions
    cur = features.psi[data.x * A + data.a]
    nxt = features.psi[data.x_next * A + data.a_next]
    p = data.probabilities()
    gram = cur.T @ (p[:, None] * cur)
    cross = cur.T @ (p[:, None] * nxt)
    b = cur.T @ (p * (data.cost - lambda_hat))
    return gram, cross, b


def _mean_cost(data: Transitions) -> float:
    return float(data.probabilities() @ data.cost)


def _solve_min_norm(M: np.ndarray, rhs: np.ndarray):
    u, sv, _ = np.linalg.svd(M)
    tol = max(M.shape) * np.finfo(float).eps * max(sv[0], 1e-300) * 1e3
    w, *_ = np.linalg.lstsq(M, rhs, rcond=tol / max(sv[0], 1e-300))
    return w, bool(np.sum(sv > tol) < M.shape[0])


def lstd_fit(data: Transitions, features: FeatureMap, lambda_hat: float | None = None) -> QEstimate:
    """Empirical average-cost LSTD.

    Solves ``mean[psi (psi - psi')^T] w = mean[psi (c - lambda_hat)]``;
    ``lambda_hat`` defaults to the sample mean cost.
    """
    if len(data) == 0:
        raise ValueError("no transitions")
    lam = _mean_cost(data) if lambda_hat is None else float(lambda_hat)
    gram, cross, b = _td_statistics(data, features, lam)
    system = gram - cross
    w, singular = _solve_min_norm(system, b)
    if singular:
        log.warning("empirical LSTD system is singular; using the minimum-norm solution")
    diag = {
        "estimator": "lstd",
        "rows": len(data),
        "lambda_hat": lam,
        "singular": singular,
        "moment_condition": float(np.linalg.cond(gram)),
    }
    return QEstimate(w, diagnostics=diag)


def lspe_fit(
    data: Transitions,
    features: FeatureMap,
    lambda_hat: float | None = None,
    iterations: int = 20,
    step: float = 0.5,
    w0: np.ndarray | None = None,
    ridge: float | None = None,
) -> QEstimate:
    """Empirical LSPE: ``w <- w + step * gram^{-1} (b - (gram - cross) w)``."""
    if len(data) == 0:
        raise ValueError("no transitions")
    lam = _mean_cost(data) if lambda_hat is None else float(lambda_hat)
    gram, cross, b = _td_statistics(data, features, lam)
    d = gram.shape[0]
    reg = default_ridge(gram) if ridge is None else float(ridge)
    gram_inv = np.linalg.pinv(gram + reg * np.eye(d))
    w = np.zeros(d) if w0 is None else np.asarray(w0, dtype=float).copy()
    for _ in range(iterations):
        w = w + step * gram_inv @ (b - (gram - cross) @ w)
    iteration = np.eye(d) - step * gram_inv @ (gram - cross)
    radius = float(np.max(np.abs(np.linalg.eigvals(iteration))))
    diag = {
        "estimator": "lspe",
        "rows": len(data),
        "lambda_hat": lam,
        "iterations": iterations,
        "step": step,
        "iteration_spectral_radius": radius,
        "diverging": radius > 1.0 + 1e-9,
    }
    return QEstimate(w, diagnostics=diag)
