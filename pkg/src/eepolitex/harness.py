"""Experiment orchestration: agent registry, sweeps, probes and the DeepSea bench."""
from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .agents import (
    AgentConfig,
    EnvStream,
    RunResult,
    Schedule,
    make_schedule,
    run_ee_politex,
    run_politex_lspe,
    run_politex_no_explore,
    run_rlsvi_baseline,
)
from .environments import (
    always_action_one_policy,
    deepsea_exploration_length,
    default_features,
    make_env,
)
from .features import FeatureMap, constant_features
from .ledger import TARGET, MissingLambdaError, average_cost_of, decompose, regret
from .mdp import Mdp, StochasticPolicy, substream
from .solvers import mixing_coefficient, optimal_average_cost_policy

log = logging.getLogger(__name__)

AGENTS = (
    "ee-politex",
    "ee-politex-one",
    "ee-politex-first",
    "ee-politex-every",
    "politex-lsmc",
    "politex-lspe",
    "rlsvi",
    "uniform",
    "optimal",
)
BENCH_AGENTS = ("politex-lspe", "politex-lsmc", "ee-politex-first", "rlsvi")
VISIT_MODE_AGENTS = ("ee-politex-one", "ee-politex-every")


@dataclass
class Experiment:
    env: str = "deepsea:N=4"
    agent: str = "ee-politex"
    T: int = 100_000
    seed: int = 0
    features: str = "auto"
    exploration: str = "auto"
    sampled_baseline: bool = False
    attach_exact: bool = True
    agent_config: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, doc: dict) -> "Experiment":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown experiment keys: {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def exploration_policy_for(mdp: Mdp, kind: str = "auto") -> tuple[StochasticPolicy, int | None]:
    """Exploration policy and its default segment length (None: use the schedule)."""
    if kind == "auto":
        kind = "always1" if mdp.name.startswith("deepsea") else "uniform"
    if kind == "always1":
        N = int(round(math.sqrt(mdp.num_states)))
        return always_action_one_policy(N), deepsea_exploration_length(N)
    if kind == "uniform":
        return StochasticPolicy.uniform(mdp.num_states, mdp.num_actions), None
    raise ValueError(f"unknown exploration policy {kind!r}")


def mixing_exploration_length(mdp: Mdp, policy: StochasticPolicy) -> int | None:
    """Exploration segment length ceil(kappa) from the policy's measured mixing.

    An alternative to the generic ``log T`` rule for chains known to mix
    fast; falls back to ``None`` (the schedule default) when the chain does
    not contract in one step.
    """
    mix = mixing_coefficient(mdp, policy)
    if mix.infinite:
        return None
    return max(1, math.ceil(mix.kappa))


def run_fixed_policy(mdp: Mdp, policy: StochasticPolicy, T: int, seed: int = 0, stream_id: int = 0) -> RunResult:
    env = EnvStream(mdp, substream(seed, stream_id))
    env.register(2, policy)
    env.run(2, T, TARGET, 1)
    return RunResult(env.recorder.ledger(mdp.name), None, Schedule(T, 1, 1, T, 0), {})


def run_agent(
    mdp: Mdp,
    agent: str,
    T: int,
    seed: int = 0,
    config: AgentConfig | None = None,
    features: FeatureMap | None = None,
    exploration: str = "auto",
) -> RunResult:
    config = AgentConfig() if config is None else config
    features = default_features(mdp) if features is None else features
    if agent.startswith("ee-politex"):
        suffix = agent[len("ee-politex"):]
        if suffix:
            mode = {"-one": "one_visit", "-first": "first_visit", "-every": "every_visit"}[suffix]
            config = AgentConfig(**{**config.to_dict(), "visit_mode": mode})
        policy, length = exploration_policy_for(mdp, exploration)
        if config.s_prime is None and length is not None:
            config = AgentConfig(**{**config.to_dict(), "s_prime": length})
        return run_ee_politex(mdp, features, policy, T, config, seed)
    if agent == "politex-lsmc":
        # same n, m, s as the exploring agent, so only the soft resets differ
        _, length = exploration_policy_for(mdp, exploration)
        if config.s is None:
            s_prime = config.s_prime if config.s_prime is not None else length
            s = make_schedule(T, config.n, config.m, None, s_prime).s
            config = AgentConfig(**{**config.to_dict(), "s": s})
        return run_politex_no_explore(mdp, features, T, config, seed)
    if agent == "politex-lspe":
        return run_politex_lspe(mdp, features, T, config, seed)
    if agent == "rlsvi":
        return run_rlsvi_baseline(mdp, features, T, config.noise_scale, config, seed)
    if agent == "uniform":
        return run_fixed_policy(mdp, StochasticPolicy.uniform(mdp.num_states, mdp.num_actions), T, seed)
    if agent == "optimal":
        return run_fixed_policy(mdp, optimal_average_cost_policy(mdp).policy, T, seed)
    raise ValueError(f"unknown agent {agent!r}; choose from {AGENTS}")


def _features_for(mdp: Mdp, kind: str) -> FeatureMap:
    if kind == "constant":
        return constant_features(mdp.num_states, mdp.num_actions)
    return default_features(mdp, kind)


def execute(exp: Experiment) -> RunResult:
    """Run one experiment cell and attach the regret baseline."""
    mdp = make_env(exp.env)
    config = AgentConfig.from_dict(exp.agent_config)
    result = run_agent(mdp, exp.agent, exp.T, exp.seed, config, _features_for(mdp, exp.features), exp.exploration)
    ledger = result.ledger
    ledger.attach_baseline(mdp, sampled=exp.sampled_baseline, seed=exp.seed)
    if exp.attach_exact and mdp.num_pairs <= 2000:
        ledger.attach_exact_lambdas(mdp)
    return result


def summarize(result: RunResult, tail: float = 0.25) -> dict:
    ledger = result.ledger
    row = {
        "T": ledger.T,
        "regret": regret(ledger),
        "avg_cost": float(np.mean(ledger.costs)),
        "target_avg_cost": average_cost_of(ledger, TARGET),
        "final_target_avg_cost": average_cost_of(ledger, TARGET, tail),
        "final_avg_cost": average_cost_of(ledger, None, tail),
        "lambda_star": ledger.lambda_star,
    }
    if ledger.lambdas and ledger.lambda_star is not None:
        try:
            d = decompose(ledger)
        except MissingLambdaError:
            return row
        row.update(
            {
                "E_T": d.exploration,
                "pseudo_regret": d.pseudo_regret,
                "V_T": d.agent_noise,
                "W_T": d.baseline_noise,
                "decomposition_residual": d.residual,
            }
        )
    return row


def manifest(exp: Experiment, result: RunResult | None = None) -> dict:
    doc = {"experiment": exp.to_dict(), "seed": exp.seed, "version": __version__}
    if result is not None:
        doc["schedule"] = asdict(result.schedule)
        doc["info"] = {k: v for k, v in result.info.items() if _jsonable(v)}
    return doc


def _jsonable(value) -> bool:
    try:
        json.dumps(value)
    except TypeError:
        return False
    return True


def _cell(exp_doc: dict) -> dict:
    exp = Experiment.from_dict(exp_doc)
    base = {"env": exp.env, "agent": exp.agent, "seed": exp.seed}
    try:
        return {**base, **summarize(execute(exp)), "error": ""}
    except Exception as err:  # one failing cell must not sink the sweep
        log.exception("cell %s failed", base)
        return {**base, "error": f"{type(err).__name__}: {err}"}


def sweep(experiments: list[Experiment], jobs: int = 1) -> list[dict]:
    docs = [e.to_dict() for e in experiments]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            return list(pool.map(_cell, docs))
    return [_cell(d) for d in docs]


def aggregate(rows: list[dict], keys=("env", "agent"), value: str = "final_target_avg_cost") -> list[dict]:
    """Median and interquartile range of ``value`` across seeds."""
    groups: dict[tuple, list[float]] = {}
    for row in rows:
        if row.get("error"):
            continue
        groups.setdefault(tuple(row[k] for k in keys), []).append(row[value])
    out = []
    for key, vals in groups.items():
        q1, med, q3 = np.percentile(vals, [25, 50, 75])
        out.append({**dict(zip(keys, key)), "n_seeds": len(vals), f"median_{value}": float(med),
                    "q1": float(q1), "q3": float(q3)})
    return out


def loglog_slope(T_values, regrets) -> float | None:
    """Least-squares slope of log R_T against log T; None with fewer than 2 points."""
    T_values = np.asarray(T_values, dtype=float)
    regrets = np.asarray(regrets, dtype=float)
    if len(T_values) < 2:
        return None
    if np.any(regrets <= 0):
        log.warning("non-positive regret in slope fit; clipping to 1e-12")
        regrets = np.maximum(regrets, 1e-12)
    return float(np.polyfit(np.log(T_values), np.log(regrets), 1)[0])


@dataclass
class ProbeResult:
    rows: list
    slope: float | None


def sublinearity_probe(
    env: str | Mdp,
    agent: str,
    T_grid,
    seeds,
    config: AgentConfig | None = None,
    features: FeatureMap | None = None,
) -> ProbeResult:
    """Median regret per horizon over seeds and the fitted log-log slope."""
    T_grid = [int(T) for T in T_grid]
    if any(b <= a for a, b in zip(T_grid, T_grid[1:])):
        raise ValueError("T_grid must be increasing")
    mdp = make_env(env) if isinstance(env, str) else env
    lam_star = optimal_average_cost_policy(mdp).lam
    rows = []
    for T in T_grid:
        regrets = []
        for seed in seeds:
            result = run_agent(mdp, agent, T, seed, config, features)
            result.ledger.lambda_star = lam_star
            regrets.append(regret(result.ledger))
        med = float(np.median(regrets))
        rows.append({"T": T, "median_regret": med, "median_regret_per_step": med / T})
    slope = loglog_slope([r["T"] for r in rows], [r["median_regret"] for r in rows])
    return ProbeResult(rows, slope)


def deepsea_bench(
    seeds=5,
    sizes=(2, 4, 6, 8, 10),
    agents=BENCH_AGENTS,
    T: int = 1_000_000,
    config: dict | None = None,
    jobs: int = 1,
) -> list[dict]:
    """One summary row per (seed, N, agent), reporting costs as in the figure."""
    seed_list = list(range(seeds)) if isinstance(seeds, int) else list(seeds)
    cells = [
        Experiment(env=f"deepsea:N={N}", agent=agent, T=T, seed=seed,
                   attach_exact=N <= 6, agent_config=dict(config or {}))
        for seed in seed_list for N in sizes for agent in agents
    ]
    rows = sweep(cells, jobs)
    for row, cell in zip(rows, cells):
        row["N"] = int(cell.env.split("=")[1])
    return rows


def write_csv(rows: list[dict], path_or_stream) -> None:
    if not rows:
        return
    columns: list[str] = []
    for row in rows:
        for k in row:
            if k not in columns:
                columns.append(k)

    def _write(stream):
        writer = csv.DictWriter(stream, columns, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in columns})

    if hasattr(path_or_stream, "write"):
        _write(path_or_stream)
    else:
        with open(path_or_stream, "w", newline="") as fh:
            _write(fh)
