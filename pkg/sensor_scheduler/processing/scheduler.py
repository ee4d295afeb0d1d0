"""Sensor scheduling objective f(S) = Tr(P_{t|t-1} - F_S^{-1}) and its maximizers.

f is monotone with f(empty) = 0. Gains and updates use the rank-one
(Sherman-Morrison) form, so each gain costs O(m^2) against the current F_S^{-1}.
"""
import itertools
import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np
import scipy.linalg.blas

from .errors import (
    DuplicateSelectionError, InfeasibleBudgetError, InstanceTooLargeError,
    InvalidEpsilonError, InvalidParamsError,
)
from .state_space import spd_inverse, symmetrize, validate_spd

logger = logging.getLogger(__name__)

BRUTE_FORCE_CAP = 2_000_000
# ln(1/eps) is rarely exact, e.g. (n/k) * ln(1/e^-1) can land a hair above an integer
CEIL_GUARD = 1e-9


class SchedulingMethod(str, Enum):
    RANDOMIZED_GREEDY = "randomized_greedy"
    CLASSIC_GREEDY = "classic_greedy"
    RANDOM_UNIFORM = "random_uniform"
    BRUTE_FORCE_OPTIMAL = "brute_force_optimal"


# shared rank-one algebra

def information_gain(F_inv: np.ndarray, a: np.ndarray, noise_var: float) -> float:
    """a^T F^-2 a / (noise_var + a^T F^-1 a)."""
    u = F_inv @ a
    return float(u @ u) / (noise_var + float(a @ u))


def batch_information_gain(F_inv: np.ndarray, rows: np.ndarray, noise_var) -> np.ndarray:
    U = rows @ F_inv
    return np.einsum("ij,ij->i", U, U) / (noise_var + np.einsum("ij,ij->i", U, rows))


def rank_one_downdate(F_inv: np.ndarray, a: np.ndarray, noise_var: float) -> np.ndarray:
    """(F + a a^T / noise_var)^{-1} from F^{-1}.

    One BLAS rank-one pass on a copy; u u^T keeps the result symmetric up to rounding,
    callers that chain many updates symmetrize once at the end.
    """
    u = F_inv @ a
    return scipy.linalg.blas.dger(-1.0 / (noise_var + float(a @ u)), u, u, a=F_inv)


@dataclass(frozen=True)
class FisherState:
    selected: Tuple[int, ...]
    F_inv: np.ndarray
    sigma: float
    P_pred_trace: float
    gain_evals: int = 0

    @staticmethod
    def initial(P_pred, sigma: float) -> "FisherState":
        P_pred = validate_spd(P_pred, "P_pred")
        if not sigma > 0:
            raise InvalidParamsError(f"sigma must be positive, got {sigma}")
        return FisherState(selected=(), F_inv=P_pred, sigma=float(sigma),
                           P_pred_trace=float(np.trace(P_pred)))

    @property
    def mse(self) -> float:
        return float(np.trace(self.F_inv))


@dataclass(frozen=True)
class Schedule:
    indices: Tuple[int, ...]
    method: SchedulingMethod
    epsilon: Optional[float]
    seed: Optional[int]
    gain_evals: int
    objective: float
    mse: float

    @property
    def k(self) -> int:
        return len(self.indices)


def objective(fisher: FisherState) -> float:
    return max(0.0, fisher.P_pred_trace - float(np.trace(fisher.F_inv)))


def marginal_gain(fisher: FisherState, a_j) -> float:
    """f_j(S) = f(S + {j}) - f(S) in closed form.

    FisherState is immutable, so a single gain is not counted here; schedulers go
    through evaluate_gains, which returns the state with gain_evals advanced.
    """
    return information_gain(fisher.F_inv, np.asarray(a_j, dtype=float), fisher.sigma**2)


def evaluate_gains(fisher: FisherState, A: np.ndarray, candidates) -> Tuple[np.ndarray, FisherState]:
    """Gains for a batch of candidate rows; the returned state counts the evaluations."""
    candidates = np.asarray(candidates, dtype=int)
    gains = batch_information_gain(fisher.F_inv, A[candidates], fisher.sigma**2)
    return gains, replace(fisher, gain_evals=fisher.gain_evals + candidates.size)


def rank_one_update(fisher: FisherState, j: int, a_j) -> FisherState:
    if j in fisher.selected:
        raise DuplicateSelectionError(f"sensor {j} is already selected")
    F_inv = rank_one_downdate(fisher.F_inv, np.asarray(a_j, dtype=float), fisher.sigma**2)
    return replace(fisher, selected=fisher.selected + (int(j),), F_inv=F_inv)


def _seed_value(seed) -> Optional[int]:
    return int(seed) if isinstance(seed, (int, np.integer)) else None


def _check_budget(n: int, k: int):
    if not 1 <= k <= n:
        raise InfeasibleBudgetError(f"budget k={k} infeasible for n={n} sensors")


def check_epsilon(k: int, epsilon: float):
    lower = math.exp(-k)
    if not (lower * (1.0 - 1e-12) <= epsilon < 1.0):
        raise InvalidEpsilonError(f"epsilon={epsilon} outside [e^-{k}, 1) = [{lower:.6g}, 1)")


def sample_size(n: int, k: int, epsilon: float) -> int:
    """s = ceil((n/k) ln(1/eps)), clamped to [1, n]."""
    _check_budget(n, k)
    check_epsilon(k, epsilon)
    s = math.ceil((n / k) * math.log(1.0 / epsilon) - CEIL_GUARD)
    return min(max(s, 1), n)


def _prepare(P_pred, A, k: int, sigma: float):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise InvalidParamsError(f"measurement matrix must be 2-D, got shape {A.shape}")
    fisher = FisherState.initial(P_pred, sigma)
    if A.shape[1] != fisher.F_inv.shape[0]:
        raise InvalidParamsError(f"measurement rows have length {A.shape[1]}, state dimension is {fisher.F_inv.shape[0]}")
    _check_budget(A.shape[0], k)
    return A, fisher


def _greedy(A: np.ndarray, fisher: FisherState, k: int, s: int, rng) -> FisherState:
    n = A.shape[0]
    remaining = np.ones(n, dtype=bool)
    for _ in range(k):
        pool = np.flatnonzero(remaining)
        if rng is None or s >= pool.size:
            candidates = pool
        else:
            candidates = np.sort(rng.choice(pool, size=s, replace=False))
        gains, fisher = evaluate_gains(fisher, A, candidates)
        # first maximum over ascending candidates -> smallest index on ties
        j = int(candidates[int(np.argmax(gains))])
        logger.debug("picked sensor %d (gain %.6g) from %d candidates", j, gains.max(), candidates.size)
        fisher = rank_one_update(fisher, j, A[j])
        remaining[j] = False
    return replace(fisher, F_inv=symmetrize(fisher.F_inv))


def randomized_greedy(P_pred, A, k: int, epsilon: float, seed, *, sigma: float) -> Schedule:
    """Greedy over a uniform sample of s = ceil((n/k) ln(1/eps)) unselected sensors per step."""
    A, fisher = _prepare(P_pred, A, k, sigma)
    s = sample_size(A.shape[0], k, epsilon)
    fisher = _greedy(A, fisher, k, s, np.random.default_rng(seed))
    return Schedule(indices=fisher.selected, method=SchedulingMethod.RANDOMIZED_GREEDY,
                    epsilon=float(epsilon), seed=_seed_value(seed),
                    gain_evals=fisher.gain_evals, objective=objective(fisher), mse=fisher.mse)


def classic_greedy(P_pred, A, k: int, *, sigma: float) -> Schedule:
    A, fisher = _prepare(P_pred, A, k, sigma)
    fisher = _greedy(A, fisher, k, A.shape[0], None)
    return Schedule(indices=fisher.selected, method=SchedulingMethod.CLASSIC_GREEDY,
                    epsilon=None, seed=None, gain_evals=fisher.gain_evals,
                    objective=objective(fisher), mse=fisher.mse)


def evaluate_schedule(P_pred, A, indices: Sequence[int], *, sigma: float) -> Tuple[float, float]:
    """(f(S), MSE_S) for a given schedule by direct inversion."""
    P_pred = validate_spd(P_pred, "P_pred")
    A = np.asarray(A, dtype=float)
    P_inv = spd_inverse(P_pred)
    return _direct_objective(P_inv, float(np.trace(P_pred)), A[sorted(indices)], sigma)


def _direct_objective(P_inv: np.ndarray, trace_P: float, A_S: np.ndarray, sigma: float):
    if A_S.shape[0] == 0:
        mse = trace_P
    else:
        mse = float(np.trace(spd_inverse(symmetrize(P_inv + (A_S.T @ A_S) / sigma**2))))
    return trace_P - mse, mse


def brute_force_optimal(P_pred, A, k: int, *, sigma: float, cap: int = BRUTE_FORCE_CAP) -> Schedule:
    """Exhaustive search over all k-subsets; ties resolve to the lexicographically smallest."""
    A, fisher = _prepare(P_pred, A, k, sigma)
    n = A.shape[0]
    total = math.comb(n, k)
    if total > cap:
        raise InstanceTooLargeError(f"C({n},{k}) = {total} subsets exceeds the cap of {cap}")

    P_inv = spd_inverse(fisher.F_inv)
    best, best_value, best_mse = None, -np.inf, None
    for subset in itertools.combinations(range(n), k):
        value, mse = _direct_objective(P_inv, fisher.P_pred_trace, A[list(subset)], sigma)
        if value > best_value:
            best, best_value, best_mse = subset, value, mse
    logger.debug("brute force scanned %d subsets, best %s", total, best)
    return Schedule(indices=best, method=SchedulingMethod.BRUTE_FORCE_OPTIMAL, epsilon=None,
                    seed=None, gain_evals=0, objective=best_value, mse=best_mse)


def random_schedule(n: int, k: int, seed, *, P_pred=None, A=None, sigma: Optional[float] = None) -> Schedule:
    """Uniform k-subset; objective and MSE are filled in when the instance is given."""
    _check_budget(n, k)
    rng = np.random.default_rng(seed)
    indices = tuple(int(i) for i in np.sort(rng.choice(n, size=k, replace=False)))
    value, mse = math.nan, math.nan
    if P_pred is not None and A is not None and sigma is not None:
        value, mse = evaluate_schedule(P_pred, A, indices, sigma=sigma)
    return Schedule(indices=indices, method=SchedulingMethod.RANDOM_UNIFORM, epsilon=None,
                    seed=_seed_value(seed), gain_evals=0,
                    objective=value, mse=mse)


# performance guarantees

@dataclass(frozen=True)
class GuaranteeFactors:
    card: float           # 1 - e^{-1/c} - eps^beta / c
    card1: float          # 1 - e^{-1/c} - eps / c
    card_vacuous: bool
    card1_vacuous: bool


def _raw_alpha(c: float, eps_term: float) -> float:
    if c < 1.0:
        raise InvalidParamsError(f"curvature constant c must be >= 1, got {c}")
    return 1.0 - math.exp(-1.0 / c) - eps_term / c


def guarantee_alpha(c: float, epsilon: float, beta: float = 1.0) -> float:
    """alpha = 1 - e^{-1/c} - eps^beta / c, clamped at 0 when the bound is vacuous."""
    alpha = _raw_alpha(c, epsilon**beta)
    if alpha < 0.0:
        logger.warning("guarantee is vacuous for c=%.4g, eps=%.4g, beta=%.4g (alpha=%.4g)",
                       c, epsilon, beta, alpha)
        return 0.0
    return alpha


def alpha_variants(c: float, epsilon: float, beta: float) -> GuaranteeFactors:
    card = _raw_alpha(c, epsilon**beta)
    card1 = _raw_alpha(c, epsilon)
    return GuaranteeFactors(card=max(card, 0.0), card1=max(card1, 0.0),
                            card_vacuous=card < 0.0, card1_vacuous=card1 < 0.0)


def beta(s: int, n: int) -> float:
    if not 1 <= s <= n:
        raise InvalidParamsError(f"sample size s={s} must lie in [1, n={n}]")
    if s == n:
        return 1.0
    return 1.0 + max(0.0, s / (2.0 * n) - 1.0 / (2.0 * (n - s)))


def mse_bound(alpha: float, mse_opt: float, trace_P_pred: float) -> float:
    """E[MSE_S] <= alpha MSE_o + (1 - alpha) Tr(P_{t|t-1})."""
    if not 0.0 <= alpha <= 1.0:
        raise InvalidParamsError(f"alpha must lie in [0, 1], got {alpha}")
    return alpha * mse_opt + (1.0 - alpha) * trace_P_pred


__all__ = [
    "SchedulingMethod", "FisherState", "Schedule", "GuaranteeFactors",
    "objective", "marginal_gain", "evaluate_gains", "rank_one_update",
    "sample_size", "check_epsilon", "randomized_greedy", "classic_greedy",
    "brute_force_optimal", "random_schedule", "evaluate_schedule",
    "guarantee_alpha", "alpha_variants", "beta", "mse_bound",
    "information_gain", "batch_information_gain", "rank_one_downdate",
]
