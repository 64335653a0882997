"""Average-cost reinforcement learning laboratory: exploration-enhanced Politex
with least-squares Monte-Carlo value estimation and exact verification tools."""

__version__ = "0.1.0"

from .agents import (
    AgentConfig,
    PolitexState,
    Schedule,
    boltzmann_policy,
    collect_data,
    make_schedule,
    run_ee_politex,
    run_politex_lspe,
    run_politex_no_explore,
    run_rlsvi_baseline,
)
from .environments import (
    always_action_one_policy,
    deepsea,
    make_env,
    random_unichain,
    two_state_chain,
)
from .estimation import (
    QEstimate,
    RolloutBatch,
    Transitions,
    clip_estimate,
    lsmc_fit,
    lspe_fit,
    lstd_fit,
    regression_targets,
)
from .features import FeatureMap, deepsea_features, excitation, tabular_features
from .ledger import RegretLedger, decompose, regret
from .mdp import (
    Mdp,
    StochasticPolicy,
    Trajectory,
    policy_transition_matrix,
    simulate,
    state_action_kernel,
)
from .solvers import (
    exact_values,
    mixing_coefficient,
    optimal_average_cost_policy,
    stationary,
    td_fixed_point,
)
