"""Exact ground-truth quantities for small unichain MDPs.

Everything here is a dense linear-algebra computation; it is the oracle the
sample-based estimators are checked against.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components

from .features import FeatureMap, moment_matrix
from .mdp import Mdp, StochasticPolicy, policy_costs, policy_transition_matrix, state_action_kernel


class NotUnichainError(ValueError):
    """The chain induced by a policy has more than one recurrent class."""


class TDUndefinedError(np.linalg.LinAlgError):
    """The projected Bellman equation has no solution."""


@dataclass(frozen=True)
class StationaryDistributions:
    mu: np.ndarray
    nu: np.ndarray


@dataclass(frozen=True)
class ExactValues:
    lam: float
    q: np.ndarray
    v: np.ndarray
    mu: np.ndarray
    condition: float


def recurrent_classes(P: np.ndarray) -> list[np.ndarray]:
    """Closed communicating classes of the support digraph of ``P``."""
    adj = (P > 0).astype(int)
    n_comp, labels = connected_components(adj, directed=True, connection="strong")
    classes = []
    for k in range(n_comp):
        members = np.flatnonzero(labels == k)
        # closed iff no edge leaves the class
        if np.all(labels[np.nonzero(adj[members])[1]] == k):
            classes.append(members)
    return classes


def is_unichain(P: np.ndarray) -> bool:
    return len(recurrent_classes(P)) == 1


def stationary_from_matrix(P: np.ndarray) -> np.ndarray:
    classes = recurrent_classes(P)
    if len(classes) != 1:
        raise NotUnichainError(f"chain has {len(classes)} recurrent classes")
    S = P.shape[0]
    system = np.vstack([P.T - np.eye(S), np.ones((1, S))])
    rhs = np.zeros(S + 1)
    rhs[-1] = 1.0
    mu, *_ = np.linalg.lstsq(system, rhs, rcond=None)
    transient = np.ones(S, dtype=bool)
    transient[classes[0]] = False
    mu[transient] = 0.0
    mu = np.clip(mu, 0.0, None)
    return mu / mu.sum()


def stationary(mdp: Mdp, policy: StochasticPolicy) -> StationaryDistributions:
    mu = stationary_from_matrix(policy_transition_matrix(mdp, policy))
    return StationaryDistributions(mu, policy.state_action_weights(mu))


def average_cost(mdp: Mdp, policy: StochasticPolicy) -> float:
    mu = stationary(mdp, policy).mu
    return float(mu @ policy_costs(mdp, policy))


def exact_values(mdp: Mdp, policy: StochasticPolicy) -> ExactValues:
    """Average cost and differential values with the gauge mu^T V = 0."""
    P = policy_transition_matrix(mdp, policy)
    mu = stationary_from_matrix(P)
    c_pi = policy_costs(mdp, policy)
    lam = float(mu @ c_pi)
    S = mdp.num_states
    # I - P + 1 mu^T is nonsingular for a unichain P; its solution has mu^T V = 0
    system = np.eye(S) - P + np.outer(np.ones(S), mu)
    cond = float(np.linalg.cond(system))
    if not np.isfinite(cond) or cond > 1e12:
        raise np.linalg.LinAlgError(f"differential value system is singular (cond={cond:.3g})")
    v = np.linalg.solve(system, c_pi - lam)
    q = mdp.cost - lam + mdp.transition @ v
    return ExactValues(lam, q.reshape(-1), v, mu, cond)


def bellman_residual(mdp: Mdp, policy: StochasticPolicy, values: ExactValues) -> float:
    H = state_action_kernel(mdp, policy)
    c = mdp.cost_vector()
    return float(np.max(np.abs(values.q - (c - values.lam + H @ values.q))))


@dataclass(frozen=True)
class Mixing:
    kappa: float
    factor: float
    infinite: bool


def mixing_coefficient(mdp: Mdp, policy: StochasticPolicy, horizon: int = 1) -> Mixing:
    """Empirical uniform-mixing constant from point-mass probes.

    ``factor`` is the largest L1 contraction of ``delta_x - mu`` under
    ``horizon`` steps of P_pi; kappa solves ``factor = exp(-horizon / kappa)``.
    """
    P = policy_transition_matrix(mdp, policy)
    mu = stationary_from_matrix(P)
    Ph = np.linalg.matrix_power(P, horizon)
    factor = 0.0
    for x in range(mdp.num_states):
        d = -mu.copy()
        d[x] += 1.0
        norm = np.abs(d).sum()
        if norm <= 1e-15:
            continue
        factor = max(factor, np.abs(d @ Ph).sum() / norm)
    if factor >= 1.0 - 1e-12:
        return Mixing(float("inf"), float(factor), True)
    if factor <= 1e-12:  # one-step mixing up to rounding
        return Mixing(float(np.finfo(float).tiny), float(factor), False)
    return Mixing(float(-horizon / np.log(factor)), float(factor), False)


@dataclass(frozen=True)
class TDFixedPoint:
    weights: np.ndarray
    rho: float
    contraction: float
    td_error: float
    best_error: float
    bound: float
    singular: bool

    @property
    def slack(self) -> float:
        """Right side minus left side of the TD approximation inequality."""
        return self.bound - self.td_error


def _weighted_norm(v: np.ndarray, nu: np.ndarray) -> float:
    return float(np.sqrt(np.sum(nu * v * v)))


def _weighted_operator_norm(M: np.ndarray, nu: np.ndarray) -> float:
    root = np.sqrt(nu)
    return float(np.linalg.norm(root[:, None] * M / root[None, :], 2))


def td_fixed_point(
    mdp: Mdp,
    policy: StochasticPolicy,
    weighting: np.ndarray,
    features: FeatureMap,
    values: ExactValues | None = None,
) -> TDFixedPoint:
    """Solve the nu-weighted projected Bellman equation and measure its error.

    When the all-ones vector lies in the feature span the system is singular
    along that direction; the solution is then fixed by the best nu-weighted
    fit of Q_pi over the null space.
    """
    nu = np.asarray(weighting, dtype=float)
    if values is None:
        values = exact_values(mdp, policy)
    psi = features.psi
    H = state_action_kernel(mdp, policy)
    c = mdp.cost_vector()
    moment = moment_matrix(features, nu)
    system = psi.T @ (nu[:, None] * (psi - H @ psi))
    rhs = psi.T @ (nu * (c - values.lam))

    u, sv, vt = np.linalg.svd(system)
    tol = max(system.shape) * np.finfo(float).eps * max(sv[0], 1.0) * 1e3
    rank = int(np.sum(sv > tol))
    w, *_ = np.linalg.lstsq(system, rhs, rcond=tol / max(sv[0], 1e-300))
    residual = np.linalg.norm(system @ w - rhs)
    if residual > 1e-8 * max(1.0, np.linalg.norm(rhs)):
        raise TDUndefinedError(f"TD fixed point undefined (system residual {residual:.3g})")
    singular = rank < system.shape[0]
    if singular:
        null = vt[rank:].T
        basis = psi @ null
        gram = basis.T @ (nu[:, None] * basis)
        t = np.linalg.lstsq(gram, basis.T @ (nu * (values.q - psi @ w)), rcond=None)[0]
        w = w + null @ t

    best, *_ = np.linalg.lstsq(moment, psi.T @ (nu * values.q), rcond=None)
    best_error = _weighted_norm(values.q - psi @ best, nu)
    td_error = _weighted_norm(values.q - psi @ w, nu)

    rho = np.nan
    contraction = np.nan
    if np.all(nu > 0):
        proj = psi @ np.linalg.pinv(moment) @ psi.T @ np.diag(nu)
        PH = proj @ H
        eye = np.eye(len(nu))
        inv = np.linalg.pinv(eye - PH) if singular else np.linalg.inv(eye - PH)
        rho = _weighted_operator_norm(inv @ PH @ (eye - proj), nu) ** 2
        contraction = _weighted_operator_norm(PH, nu)
    bound = float(np.sqrt(1.0 + rho) * best_error) if np.isfinite(rho) else np.inf
    return TDFixedPoint(w, float(rho), float(contraction), td_error, best_error, bound, singular)


@dataclass(frozen=True)
class OptimalPolicy:
    policy: StochasticPolicy
    lam: float
    converged: bool
    iterations: int


def optimal_average_cost_policy(
    mdp: Mdp, tol: float = 1e-10, max_iter: int = 200_000, laziness: float = 0.5
) -> OptimalPolicy:
    """Gain-optimal deterministic policy by relative value iteration.

    Iterates on the lazy chain ``laziness * I + (1 - laziness) * P``, which
    has the same gains and optimal policies but is aperiodic, so the
    iteration converges on periodic instances such as DeepSea.
    """
    S, A = mdp.cost.shape
    P = laziness * np.eye(S)[:, None, :] + (1.0 - laziness) * mdp.transition
    c = mdp.cost
    h = np.zeros(S)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        new = np.min(c + P @ h, axis=1)
        diff = new - h
        h = new - new[0]
        if diff.max() - diff.min() <= tol:
            converged = True
            break
    if not converged:
        warnings.warn("relative value iteration hit the iteration cap", RuntimeWarning)
    q = c + P @ h
    # lowest-index action among numerical ties
    actions = np.argmax(q <= q.min(axis=1, keepdims=True) + 1e-9, axis=1)
    policy = StochasticPolicy.deterministic(actions, A)
    try:
        lam = average_cost(mdp, policy)
    except NotUnichainError:
        lam = float(0.5 * (diff.max() + diff.min()))
    return OptimalPolicy(policy, lam, converged, it)


def diagnostics(
    mdp: Mdp,
    policy: StochasticPolicy,
    features: FeatureMap | None = None,
    weighting: np.ndarray | None = None,
) -> dict:
    """Flat JSON-ready record of exact quantities for one (mdp, policy) pair."""
    values = exact_values(mdp, policy)
    mix = mixing_coefficient(mdp, policy)
    nu = policy.state_action_weights(values.mu)
    rec = {
        "env": mdp.name,
        "num_states": mdp.num_states,
        "num_actions": mdp.num_actions,
        "lambda": values.lam,
        "bellman_residual": bellman_residual(mdp, policy, values),
        "mu_dot_v": float(values.mu @ values.v),
        "condition": values.condition,
        "kappa": None if mix.infinite else mix.kappa,
        "contraction_factor": mix.factor,
        "mu": values.mu.tolist(),
        "v": values.v.tolist(),
        "q": values.q.tolist(),
    }
    if features is not None:
        w = nu if weighting is None else np.asarray(weighting, dtype=float)
        td = td_fixed_point(mdp, policy, w, features, values)
        rec.update(
            {
                "rho": None if not np.isfinite(td.rho) else td.rho,
                "td_contraction": None if not np.isfinite(td.contraction) else td.contraction,
                "td_error": td.td_error,
                "best_linear_error": td.best_error,
                "td_bound_slack": None if not np.isfinite(td.slack) else td.slack,
            }
        )
    return rec
