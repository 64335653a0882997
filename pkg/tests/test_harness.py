import io

import numpy as np
import pytest

from eepolitex import StochasticPolicy, make_env, two_state_chain
from eepolitex.harness import (
    Experiment,
    aggregate,
    execute,
    loglog_slope,
    manifest,
    run_agent,
    run_fixed_policy,
    summarize,
    sweep,
    write_csv,
)
from eepolitex.ledger import (
    EXPLORE,
    TARGET,
    MissingLambdaError,
    Recorder,
    average_cost_of,
    decompose,
    regret,
)
from eepolitex.mdp import Mdp
from eepolitex.solvers import average_cost, optimal_average_cost_policy


def _hand_ledger():
    rec = Recorder()
    rec.policies = {0: None, 2: None}
    rec.extend([0, 1], [0, 0], [1.0, 0.0], EXPLORE, 0, 1)
    rec.extend([0, 1, 0], [1, 1, 1], [2.0, 2.0, 1.0], TARGET, 2, 1)
    return rec.ledger()


# -- ledger ---------------------------------------------------------------------

def test_hand_ledger_regret_and_decomposition():
    led = _hand_ledger()
    led.lambdas = {0: 0.5, 2: 1.5}
    led.lambda_star = 0.25
    assert regret(led) == pytest.approx(6.0 - 5 * 0.25)
    d = decompose(led)
    assert d.exploration == pytest.approx(2 * 0.25)
    assert d.pseudo_regret == pytest.approx(3 * 1.25)
    assert d.agent_noise == pytest.approx((1.0 - 0.5) + (0.0 - 0.5) + (2 - 1.5) * 2 + (1 - 1.5))
    assert d.baseline_noise == 0.0
    assert d.residual == pytest.approx(0.0, abs=1e-12)


def test_decomposition_requires_lambdas():
    led = _hand_ledger()
    led.lambda_star = 0.0
    with pytest.raises(MissingLambdaError):
        decompose(led)
    led.lambdas = {0: 0.0}
    with pytest.raises(MissingLambdaError):
        decompose(led)


def test_segment_averages():
    led = _hand_ledger()
    assert average_cost_of(led, TARGET) == pytest.approx(5 / 3)
    assert average_cost_of(led, None) == pytest.approx(6 / 5)
    # the last step is a target step, so no exploration cost remains
    assert np.isnan(average_cost_of(led, EXPLORE, tail=0.2))


def test_csv_columns_and_cumulative_sums():
    led = _hand_ledger()
    led.lambda_star = 1.0
    lines = led.csv_text().splitlines()
    assert lines[0] == "t,state,action,cost,segment_kind,policy_id,cum_cost,cum_regret"
    assert len(lines) == 6
    last = lines[-1].split(",")
    assert last[4] == "target" and float(last[6]) == 6.0 and float(last[7]) == 1.0


def test_constant_cost_mdp_has_zero_regret(rng):
    P = rng.dirichlet(np.ones(3), size=(3, 2))
    mdp = Mdp(np.full((3, 2), 0.75), P)
    for agent in ("ee-politex", "politex-lsmc", "rlsvi", "uniform"):
        res = run_agent(mdp, agent, 3000, seed=1)
        res.ledger.attach_baseline(mdp)
        assert regret(res.ledger) == 0.0


def test_uniform_play_regret_matches_lambda_gap():
    mdp = make_env("random:S=4,A=2,seed=3")
    T = 100_000
    res = run_fixed_policy(mdp, StochasticPolicy.uniform(4, 2), T, seed=4)
    res.ledger.attach_baseline(mdp)
    gap = average_cost(mdp, StochasticPolicy.uniform(4, 2)) - optimal_average_cost_policy(mdp).lam
    assert abs(regret(res.ledger) / T - gap) <= 0.01


@pytest.mark.parametrize("agent", ["ee-politex", "politex-lsmc", "politex-lspe", "rlsvi"])
@pytest.mark.parametrize("sampled", [False, True])
def test_decomposition_identity_on_runs(agent, sampled):
    exp = Experiment(env="random:S=4,A=2,seed=0", agent=agent, T=20_000, seed=2, sampled_baseline=sampled)
    d = decompose(execute(exp).ledger)
    assert abs(d.residual) <= 1e-9 * 20_000


def test_pure_exploration_prices_only_exploration():
    mdp = make_env("random:S=3,A=2,seed=5")
    res = run_fixed_policy(mdp, StochasticPolicy.uniform(3, 2), 5000, seed=0)
    led = res.ledger
    led.segments[:] = EXPLORE
    led.attach_baseline(mdp).attach_exact_lambdas(mdp)
    d = decompose(led)
    gap = average_cost(mdp, StochasticPolicy.uniform(3, 2)) - led.lambda_star
    assert d.exploration == pytest.approx(5000 * gap, rel=1e-12)
    assert d.pseudo_regret == 0.0


def test_baseline_noise_concentrates():
    # states are i.i.d. fair coin flips, so W_T has standard deviation sqrt(T)/2
    mdp = two_state_chain(0.5)
    T = 4000
    hits = 0
    for seed in range(50):
        res = run_fixed_policy(mdp, StochasticPolicy.uniform(2, 1), T, seed=seed)
        res.ledger.attach_baseline(mdp, sampled=True, seed=seed)
        w = decompose(res.ledger.attach_exact_lambdas(mdp)).baseline_noise
        hits += abs(w) <= 2.5 * 0.5 * np.sqrt(T)
    assert hits >= 45


# -- harness --------------------------------------------------------------------

def test_loglog_slope():
    assert loglog_slope([10], [3.0]) is None
    T = np.array([1e2, 1e3, 1e4])
    assert loglog_slope(T, 5 * T**0.8) == pytest.approx(0.8, abs=1e-12)


def test_summary_fields_and_manifest():
    exp = Experiment(env="chain:p=0.5", agent="uniform", T=1000, seed=3)
    res = execute(exp)
    row = summarize(res)
    assert row["T"] == 1000 and row["lambda_star"] == pytest.approx(0.5)
    assert abs(row["decomposition_residual"]) <= 1e-9
    doc = manifest(exp, res)
    assert doc["experiment"]["seed"] == 3 and doc["schedule"]["T"] == 1000


def test_sweep_isolates_failures_and_aggregates():
    cells = [
        Experiment(env="chain:p=0.5", agent="uniform", T=500, seed=s) for s in range(3)
    ] + [Experiment(env="chain:p=0.5", agent="nonsense", T=500, seed=0)]
    rows = sweep(cells)
    assert [bool(r["error"]) for r in rows] == [False, False, False, True]
    agg = aggregate(rows)
    assert len(agg) == 1 and agg[0]["n_seeds"] == 3
    vals = sorted(r["final_target_avg_cost"] for r in rows[:3])
    assert agg[0]["median_final_target_avg_cost"] == vals[1]
    buf = io.StringIO()
    write_csv(rows, buf)
    header = buf.getvalue().splitlines()[0].split(",")
    assert header[:3] == ["env", "agent", "seed"] and "error" in header


def test_parallel_sweep_matches_serial():
    cells = [Experiment(env="random:S=3,A=2,seed=1", agent="ee-politex", T=3000, seed=s) for s in range(2)]
    assert sweep(cells, jobs=2) == sweep(cells, jobs=1)


def test_unknown_experiment_key():
    with pytest.raises(ValueError):
        Experiment.from_dict({"env": "deepsea:N=2", "horizon": 5})
