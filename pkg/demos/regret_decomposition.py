"""Walk through one EE-Politex run and split its regret into four parts.

Run with ``python demos/regret_decomposition.py``.
"""
from eepolitex import make_env
from eepolitex.harness import Experiment, execute, summarize
from eepolitex.ledger import decompose


def main():
    exp = Experiment(env="random:S=5,A=2,seed=3", agent="ee-politex", T=200_000, seed=1)
    mdp = make_env(exp.env)
    result = execute(exp)
    ledger = result.ledger
    print(f"{mdp.name}: {mdp.num_states} states, {mdp.num_actions} actions")
    print(f"schedule: {result.schedule}")
    print(f"steps per segment: {ledger.segment_counts()}")
    d = decompose(ledger)
    print(f"regret R_T                      {d.total:12.3f}")
    print(f"  exploration price E_T         {d.exploration:12.3f}")
    print(f"  pseudo-regret of targets      {d.pseudo_regret:12.3f}")
    print(f"  agent noise V_T               {d.agent_noise:12.3f}")
    print(f"  baseline noise W_T            {d.baseline_noise:12.3f}")
    print(f"  residual                      {d.residual:12.2e}")
    row = summarize(result)
    print(f"final target average cost {row['final_target_avg_cost']:.4f} vs optimum {row['lambda_star']:.4f}")


if __name__ == "__main__":
    main()
