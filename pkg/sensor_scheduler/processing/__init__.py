from .errors import (
    SchedulingError, InvalidCovarianceError, InvalidEpsilonError, InfeasibleBudgetError,
    DuplicateSelectionError, InstanceTooLargeError, InvalidParamsError, InvalidTripletError,
    ConfigError, BoundViolationError,
)
from .state_space import (
    StateSpaceModel, CovarianceState, Trajectory,
    predict_covariance, filtered_covariance, kalman_step, filter_mean, simulate,
)
from .scheduler import (
    SchedulingMethod, FisherState, Schedule, GuaranteeFactors,
    objective, marginal_gain, evaluate_gains, rank_one_update, sample_size,
    randomized_greedy, classic_greedy, brute_force_optimal, random_schedule,
    guarantee_alpha, alpha_variants, beta, mse_bound,
)
from .curvature import (
    CurvatureReport, Theorem2Params, Theorem2Report,
    exact_curvature, sampled_curvature, theorem2_phi, theorem2_curvature_bound,
    theorem2_success_probability, theorem2_empirical_check,
)
from .network_exchange import (
    ExchangeNetwork, ExchangeTriplet, ExchangeSchedule, SensingNode,
    g_marginal, f_marginal, utility_marginal, greedy_exchange,
    proposition1_bound, balance_metrics, simulate_exchange,
)


__all__ = [
    "StateSpaceModel", "CovarianceState", "Trajectory",
    "predict_covariance", "filtered_covariance", "kalman_step", "filter_mean", "simulate",
    "SchedulingMethod", "FisherState", "Schedule", "GuaranteeFactors",
    "objective", "marginal_gain", "evaluate_gains", "rank_one_update", "sample_size",
    "randomized_greedy", "classic_greedy", "brute_force_optimal", "random_schedule",
    "guarantee_alpha", "alpha_variants", "beta", "mse_bound",
    "CurvatureReport", "Theorem2Params", "Theorem2Report",
    "exact_curvature", "sampled_curvature", "theorem2_phi", "theorem2_curvature_bound",
    "theorem2_success_probability", "theorem2_empirical_check",
    "ExchangeNetwork", "ExchangeTriplet", "ExchangeSchedule", "SensingNode",
    "g_marginal", "f_marginal", "utility_marginal", "greedy_exchange",
    "proposition1_bound", "balance_metrics", "simulate_exchange",
    "SchedulingError", "InvalidCovarianceError", "InvalidEpsilonError", "InfeasibleBudgetError",
    "DuplicateSelectionError", "InstanceTooLargeError", "InvalidParamsError", "InvalidTripletError",
    "ConfigError", "BoundViolationError",
]
