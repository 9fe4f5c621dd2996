"""Exact analysis laboratory for cooperative multi-agent actor-critic
methods on small, fully enumerable decentralized POMDPs.

The package computes — in closed form, no sampling — discounted visitation
weights over joint histories and states, the four critic value tables
(individual, joint-history, state, history-state, plus the timed state
variant), exact means/variances of the corresponding single-sample policy
gradient estimators, and bias reports between them.  On top of that sit
small exact and stochastic training loops, episode-driven actor-critic
trainers, a bundle of classic toy domains, and a command-line tool that
verifies the whole stack and exports CSV/JSON artifacts.
"""

__version__ = "0.1.0"

from .model import (
    DecPomdpModel,
    ModelError,
    PolicySet,
    SoftmaxPolicy,
    TabularPolicy,
    TimedPolicy,
    UnsupportedParameterizationError,
    build_model,
    load_model,
    model_from_json,
    model_to_json,
    save_model,
    uniform_policies,
)
from .visitation import (
    BudgetExceededError,
    CandidateDistributions,
    EMPTY,
    HistoryInterner,
    VisitationTable,
    candidate_action_distributions,
    compute_visitation,
    is_empty,
    joint_action_probs,
    max_depth_for,
    project_history,
    sequence_settled,
)
from .values import (
    GenericBellmanSystem,
    HISTORY_STATE,
    INDIVIDUAL,
    JOINT_HISTORY,
    NoUniqueSolutionError,
    STATE,
    TIMED_STATE,
    ValueComputationError,
    ValueTable,
    VariantMismatchError,
    advantage_table,
    expected_return,
    history_value_tables,
    individual_value_table,
    state_value_table,
    timed_state_value_table,
)
from .gradients import (
    ESTIMATOR_VARIANTS,
    BiasReport,
    Episode,
    GradientCoordinates,
    GradientMoments,
    TrainResult,
    bias_report,
    conditional_state_value_variance,
    estimator_tables,
    expected_gradient,
    finite_difference_gradient,
    gd_train,
    gradient_coordinates,
    gradient_moments,
    mean_conditional_value_variance,
    policy_gradient,
    sample_gradient,
    score_coefficients,
    sgd_train,
    value_variance,
)
from .actor_critic import (
    ALGORITHM_VARIANTS,
    CriticModel,
    EvalPoint,
    JointSoftmaxPolicy,
    TrainConfig,
    TrainCurve,
    default_config,
    evaluate_policies,
    greedy_policies,
    make_actors,
    td_advantages,
    train,
)
from .domains import (
    DOMAIN_NAMES,
    DomainBundle,
    beverage,
    climb_game,
    dec_tiger,
    doubling_sequence,
    get_domain,
    guess_game,
    make_random_model,
    make_random_policies,
    morning_game,
    observable_climb,
    oscillating_chain,
    soften_reference,
)
