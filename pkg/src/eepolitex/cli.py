"""Command line entry point: ``eepolitex {run,sweep,exact,deepsea-bench}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .environments import always_action_one_policy, make_env
from .features import FeatureMap
from .harness import (
    BENCH_AGENTS,
    VISIT_MODE_AGENTS,
    Experiment,
    aggregate,
    deepsea_bench,
    execute,
    manifest,
    summarize,
    sweep,
    write_csv,
)
from .mdp import StochasticPolicy
from .solvers import diagnostics, optimal_average_cost_policy

log = logging.getLogger("eepolitex")


class CliError(Exception):
    pass


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as err:
        raise CliError(f"cannot read config {path}: {err}") from err
    if not isinstance(doc, dict):
        raise CliError("config must be a JSON object")
    return doc


def _experiment(args) -> Experiment:
    doc = _load_config(args.config)
    for key in ("env", "agent", "T", "seed", "features", "exploration"):
        value = getattr(args, key, None)
        if value is not None:
            doc[key] = value
    if getattr(args, "sampled_baseline", False):
        doc["sampled_baseline"] = True
    agent_cfg = dict(doc.get("agent_config", {}))
    for item in getattr(args, "set", None) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise CliError(f"--set expects key=value, got {item!r}")
        agent_cfg[key] = _parse_value(value)
    doc["agent_config"] = agent_cfg
    try:
        return Experiment.from_dict(doc)
    except (TypeError, ValueError) as err:
        raise CliError(str(err)) from err


def cmd_run(args) -> int:
    exp = _experiment(args)
    result = execute(exp)
    out = Path(args.out or f"run_{exp.agent}_{exp.seed}.csv")
    with open(out, "w", newline="") as fh:
        result.ledger.to_csv(fh)
    man = manifest(exp, result)
    man["summary"] = summarize(result)
    Path(args.manifest or str(out) + ".manifest.json").write_text(json.dumps(man, indent=2, default=str))
    print(json.dumps(man["summary"], default=str))
    return 0


def cmd_sweep(args) -> int:
    base = _experiment(args)
    cells = [
        Experiment.from_dict({**base.to_dict(), "env": env, "agent": agent, "seed": seed})
        for env in (args.envs or [base.env])
        for agent in (args.agents or [base.agent])
        for seed in range(args.first_seed, args.first_seed + args.seeds)
    ]
    rows = sweep(cells, args.jobs)
    write_csv(rows, args.out)
    if args.summary:
        write_csv(aggregate(rows), args.summary)
    failed = sum(1 for r in rows if r.get("error"))
    if failed:
        log.warning("%d of %d cells failed", failed, len(rows))
    return 0


def _policy(mdp, spec: str) -> StochasticPolicy:
    if spec == "uniform":
        return StochasticPolicy.uniform(mdp.num_states, mdp.num_actions)
    if spec == "optimal":
        return optimal_average_cost_policy(mdp).policy
    if spec == "always1":
        return always_action_one_policy(int(round(np.sqrt(mdp.num_states))))
    if spec.startswith("random"):
        _, _, seed = spec.partition(":")
        rng = np.random.default_rng(int(seed or 0))
        return StochasticPolicy(rng.dirichlet(np.ones(mdp.num_actions), size=mdp.num_states))
    if spec.startswith("action:"):
        a = int(spec.split(":")[1])
        return StochasticPolicy.deterministic(np.full(mdp.num_states, a), mdp.num_actions)
    raise CliError(f"unknown policy {spec!r}")


def cmd_exact(args) -> int:
    mdp = make_env(args.env)
    policy = _policy(mdp, args.policy)
    features = None
    if args.features_json:
        features = FeatureMap.from_json(Path(args.features_json).read_text())
    rec = diagnostics(mdp, policy, features)
    rec["policy"] = args.policy
    text = json.dumps(rec, indent=2)
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text)
    return 0


def cmd_bench(args) -> int:
    agent_cfg = _load_config(args.config).get("agent_config", {})
    agents = tuple(args.agents) + (VISIT_MODE_AGENTS if args.all_visit_modes else ())
    rows = deepsea_bench(args.seeds, tuple(args.sizes), agents, args.T, agent_cfg, args.jobs)
    write_csv(rows, args.out)
    summary = aggregate(rows, keys=("N", "agent"))
    for row in sorted(summary, key=lambda r: (r["N"], r["agent"])):
        print(f"N={row['N']:<3d} {row['agent']:<18s} median final target cost "
              f"{row['median_final_target_avg_cost']:+.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eepolitex", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON experiment file; flags override its keys")
        p.add_argument("--env")
        p.add_argument("--agent")
        p.add_argument("--T", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--features", help="auto, tabular, deepsea or constant")
        p.add_argument("--exploration", help="auto, uniform or always1")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="agent config override")
        p.add_argument("--sampled-baseline", action="store_true")

    p = sub.add_parser("run", help="one agent, env and seed; writes ledger CSV + manifest")
    common(p)
    p.add_argument("--out")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="grid over envs, agents and seeds")
    common(p)
    p.add_argument("--envs", nargs="+")
    p.add_argument("--agents", nargs="+")
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--first-seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default="sweep.csv")
    p.add_argument("--summary")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("exact", help="dump exact solver diagnostics")
    p.add_argument("--env", required=True)
    p.add_argument("--policy", default="uniform")
    p.add_argument("--features-json")
    p.add_argument("--out")
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("deepsea-bench", help="DeepSea comparison across grid sizes")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--sizes", type=int, nargs="+", default=[2, 4, 6, 8, 10])
    p.add_argument("--agents", nargs="+", default=list(BENCH_AGENTS))
    p.add_argument("--all-visit-modes", action="store_true",
                   help="add the one-visit and every-visit EE-Politex variants")
    p.add_argument("--T", type=int, default=1_000_000)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--config")
    p.add_argument("--out", default="deepsea_bench.csv")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
