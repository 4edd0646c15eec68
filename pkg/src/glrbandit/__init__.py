"""Two-stage generalized low-rank matrix bandits.

Stage 1 explores, estimates the parameter matrix's singular subspaces
(:class:`SteinEstimator` or :class:`LoglikEstimator`), and rotates the arms
(:class:`SubspaceTransformer`). Stage 2 runs a GLM-UCB learner that either
penalizes the nearly null coordinates (:class:`LowGLMUCB`,
:class:`PLowGLMUCB`) or drops them (:class:`ReducedGLMUCB`).
"""

from .bandit import (
    BanditState,
    ConfidenceConfig,
    GLMUCBPolicy,
    LowGLMUCB,
    PLowGLMUCB,
    ReducedGLMUCB,
    RidgePenalty,
    alpha_t,
    init_state,
    lambda_perp_default,
    lowglm_step,
    observe,
    plowglm_step,
    project_theta,
    reduced_glm_ucb_step,
    select_arm_ucb,
    solve_regularized_mle,
)
from .config import ExperimentConfig, load_config
from .environment import (
    GroundTruth,
    RegretTrace,
    RewardModel,
    gen_arms,
    gen_theta_star,
    optimal_reward,
    reward_draw,
    subgaussian_residual_check,
)
from .exceptions import (
    DimensionMismatch,
    EmptyArmSet,
    EmptySampleSet,
    GLRBanditError,
    InvalidConfig,
    NegativeQuadraticForm,
    NonSymmetricInput,
    NotConverged,
    RankOutOfRange,
)
from .links import LinkFunction, linear_link, logistic_link, make_link
from .matrix_core import (
    GramState,
    SvdFactorization,
    apply_spectral,
    gram_rank_one_update,
    hermitian_dilation,
    psi_scalar,
    psi_tilde,
    svt,
    weighted_norm,
)
from .runner import (
    compare_estimators,
    emit_trace,
    run_baseline_naive,
    run_contextual,
    run_experiment,
    run_gestt,
    run_gests,
)
from .stage1 import (
    LoglikEstimator,
    ScoreDistribution,
    SteinEstimator,
    draw_exploration_arm,
    solve_loglik,
    solve_stein,
    stein_target,
)
from .subspace import (
    SubspaceRotation,
    SubspaceTransformer,
    build_rotated_problem,
    effective_dimension,
    reduce_tail,
    rotate_and_vectorize,
    s_perp_bound,
    svd_split,
)

__version__ = "0.1.0"
