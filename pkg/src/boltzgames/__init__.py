"""Solvers, environments, and reward learning for Markov games in which
every agent plays a Boltzmann mixed strategy of its action values.

The package covers three solver families (a discounted coupled fixed point,
an undiscounted finite-horizon stage recursion with damping, and an
occupancy-measure forward-backward planner for own-state games), the
theorem-style sufficient conditions guarding each of them, a
maximum-causal-entropy reward learner, the benchmark environments, a rollout
harness, and a command-line front end.
"""

__version__ = "0.1.0"

from .game import (
    GameFormatError,
    GameValidationError,
    JointState,
    MarkovGame,
    TransitionKernel,
    action_profile_components,
    action_profile_index,
    continuation_tensor,
    game_from_dict,
    game_to_dict,
    joint_action_probabilities,
    joint_components,
    joint_index,
    joint_transition_row,
    load_game,
    opponent_mix,
    save_game,
    validate_game,
)
from .softmax import (
    boltzmann_policy,
    policies_from_q,
    policy_l1_distance,
    soft_value,
    softmax_log,
    sup_distance,
)
from .infinite_horizon import (
    InfiniteHorizonSolver,
    coupled_bellman_update,
    infinite_contraction_bound,
    scale_rewards_to_contraction,
)
from .finite_horizon import (
    FiniteHorizonSolver,
    FiniteSolution,
    damping_convergence_condition,
    finite_contraction_bound,
    solve_finite_horizon,
    solve_stage,
    stage_backup,
)
from .forward_backward import (
    ForwardBackwardSolver,
    InteractionFunctional,
    LinearPenalty,
    SimplifiedGame,
    forward_backward_convergence_bound,
    interaction_penalty,
    occupancy_backward_step,
    occupancy_forward_step,
    validate_simplified_game,
)
from .irl import (
    CausalEntropyResult,
    FeatureModel,
    OnlineRewardLearner,
    TrajectoryLog,
    causal_entropy_backward,
    dual_gradient,
    dual_objective,
    empirical_feature_expectation,
    model_feature_expectation,
    online_irl_step,
    project_to_ball,
)
from .envs import (
    ENVIRONMENTS,
    EnvironmentSpec,
    build_driving_scene,
    build_environment,
    build_grid_game_1,
    build_grid_game_2,
    build_pursuit_2p,
    build_pursuit_3p,
    build_rabbit_hole,
    generate_random_game,
    generate_random_simplified_game,
)
from .rollout import (
    RolloutConfig,
    RolloutReport,
    run_rollouts,
    run_simplified_rollouts,
    score_summary,
)
from .trace import SolveTrace, write_stage_traces_csv, write_trace_csv

__all__ = [
    "__version__",
    # game model
    "GameFormatError", "GameValidationError", "JointState", "MarkovGame",
    "TransitionKernel", "action_profile_components", "action_profile_index",
    "continuation_tensor", "game_from_dict", "game_to_dict",
    "joint_action_probabilities", "joint_components", "joint_index",
    "joint_transition_row", "load_game", "opponent_mix", "save_game",
    "validate_game",
    # Boltzmann core
    "boltzmann_policy", "policies_from_q", "policy_l1_distance", "soft_value",
    "softmax_log", "sup_distance",
    # solvers
    "InfiniteHorizonSolver", "coupled_bellman_update",
    "infinite_contraction_bound", "scale_rewards_to_contraction",
    "FiniteHorizonSolver", "FiniteSolution", "damping_convergence_condition",
    "finite_contraction_bound", "solve_finite_horizon", "solve_stage",
    "stage_backup",
    "ForwardBackwardSolver", "InteractionFunctional", "LinearPenalty",
    "SimplifiedGame", "forward_backward_convergence_bound",
    "interaction_penalty", "occupancy_backward_step", "occupancy_forward_step",
    "validate_simplified_game",
    # reward learning
    "CausalEntropyResult", "FeatureModel", "OnlineRewardLearner",
    "TrajectoryLog", "causal_entropy_backward", "dual_gradient",
    "dual_objective", "empirical_feature_expectation",
    "model_feature_expectation", "online_irl_step", "project_to_ball",
    # environments
    "ENVIRONMENTS", "EnvironmentSpec", "build_driving_scene",
    "build_environment", "build_grid_game_1", "build_grid_game_2",
    "build_pursuit_2p", "build_pursuit_3p", "build_rabbit_hole",
    "generate_random_game", "generate_random_simplified_game",
    # rollouts
    "RolloutConfig", "RolloutReport", "run_rollouts",
    "run_simplified_rollouts", "score_summary",
    # traces
    "SolveTrace", "write_stage_traces_csv", "write_trace_csv",
]
