"""Element-wise curvature of the scheduling objective.

C_l = max f_i(T) / f_i(S) over S subset T, i outside T, |T \\ S| = l, and
C_max = max_l C_l; f is submodular iff C_max <= 1. Also the probabilistic
curvature bound for i.i.d. bounded measurement vectors.
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np
import scipy.linalg as la

from .errors import InstanceTooLargeError, InvalidParamsError
from .scheduler import batch_information_gain
from .state_space import spd_inverse, sphere_measurements, symmetrize, validate_spd

logger = logging.getLogger(__name__)

EXACT_CAP = 10
DEGENERATE_GAIN = 1e-14

EXACT = "exact"
SAMPLED = "sampled"


@dataclass(frozen=True)
class CurvatureReport:
    """Per-distance curvatures C_l, l = 1..n-1.

    NaN marks a distance with no usable ratio (every denominator degenerate, or never
    sampled); C_max is the maximum over the defined entries and NaN when there are none.
    """
    C_l: np.ndarray
    C_max: float
    mode: str
    samples: int = 0
    skipped: int = 0

    @property
    def c_effective(self) -> float:
        if math.isnan(self.C_max):
            return 1.0
        return max(1.0, self.C_max)


def _popcount(masks: np.ndarray) -> np.ndarray:
    return np.array([bin(int(x)).count("1") for x in masks], dtype=int)


def curvature_from_gains(gains: np.ndarray, tol: float = DEGENERATE_GAIN) -> Tuple[np.ndarray, int]:
    """Per-distance curvatures from a gain table.

    gains[mask, i] is the marginal gain of element i on the set encoded by the
    bitmask; entries with i inside mask are ignored. Returns (C_l for l = 1..n-1,
    number of skipped degenerate ratios).
    """
    n_masks, n = gains.shape
    if n_masks != 1 << n:
        raise InvalidParamsError(f"gain table needs 2^{n} rows, got {n_masks}")
    masks = np.arange(n_masks)
    sizes = _popcount(masks)
    bits = np.arange(n)

    C_l = np.full(max(n - 1, 0), -np.inf)
    skipped = 0
    for T in range(1, n_masks):
        if sizes[T] == n:
            continue
        free = ((T >> bits) & 1) == 0
        subs = masks[((masks & ~T) == 0) & (masks != T)]
        num = gains[T, free]
        den = gains[np.ix_(subs, np.flatnonzero(free))]
        valid = den > tol
        skipped += int(np.count_nonzero(~valid))
        ratios = np.full(den.shape, -np.inf)
        np.divide(num, den, out=ratios, where=valid)
        np.maximum.at(C_l, sizes[T] - sizes[subs] - 1, ratios.max(axis=1))

    C_l[np.isneginf(C_l)] = np.nan
    return C_l, skipped


def _mask_inverse(P_inv: np.ndarray, A: np.ndarray, members, sigma: float) -> np.ndarray:
    members = sorted(members)
    if not members:
        return spd_inverse(P_inv)
    A_S = A[members]
    return spd_inverse(symmetrize(P_inv + (A_S.T @ A_S) / sigma**2))


def _prepare(P_pred, A, sigma):
    P_pred = validate_spd(P_pred, "P_pred")
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[1] != P_pred.shape[0]:
        raise InvalidParamsError(f"measurement matrix shape {A.shape} does not match state dimension {P_pred.shape[0]}")
    if A.shape[0] < 2:
        raise InvalidParamsError("curvature needs at least two sensors")
    if not sigma > 0:
        raise InvalidParamsError(f"sigma must be positive, got {sigma}")
    return spd_inverse(P_pred), A


def _summarize(C_l: np.ndarray, mode: str, samples: int, skipped: int) -> CurvatureReport:
    if skipped:
        logger.warning("%d degenerate curvature ratios skipped (gain <= %g)", skipped, DEGENERATE_GAIN)
    C_max = float(np.nanmax(C_l)) if np.any(np.isfinite(C_l)) else math.nan
    return CurvatureReport(C_l=C_l, C_max=C_max, mode=mode, samples=samples, skipped=skipped)


def exact_curvature(P_pred, A, sigma: float, cap: int = EXACT_CAP) -> CurvatureReport:
    P_inv, A = _prepare(P_pred, A, sigma)
    n = A.shape[0]
    if n > cap:
        raise InstanceTooLargeError(f"exact curvature enumerates 3^n triples; n={n} exceeds the cap of {cap}")

    gains = np.empty((1 << n, n))
    for mask in range(1 << n):
        members = [i for i in range(n) if mask >> i & 1]
        gains[mask] = batch_information_gain(_mask_inverse(P_inv, A, members, sigma), A, sigma**2)
        gains[mask, members] = np.nan
    C_l, skipped = curvature_from_gains(gains)
    report = _summarize(C_l, EXACT, 0, skipped)
    logger.debug("exact curvature over n=%d: C_max=%.6g", n, report.C_max)
    return report


def sampled_curvature(P_pred, A, sigma: float, samples: int, seed) -> CurvatureReport:
    """Lower estimate of the curvature from random (S, T, i) triples.

    Sizes 0 <= |S| < |T| <= n - 1 are drawn uniformly over valid pairs, then S, T \\ S
    and i uniformly. The sample stream for a seed is a prefix of the stream for any
    larger sample count.
    """
    if samples < 1:
        raise InvalidParamsError(f"samples must be positive, got {samples}")
    P_inv, A = _prepare(P_pred, A, sigma)
    n = A.shape[0]
    rng = np.random.default_rng(seed)
    size_pairs = [(a, b) for b in range(1, n) for a in range(b)]
    cache: Dict[int, np.ndarray] = {}

    def gains_of(members) -> np.ndarray:
        mask = sum(1 << int(i) for i in members)
        if mask not in cache:
            cache[mask] = batch_information_gain(_mask_inverse(P_inv, A, members, sigma), A, sigma**2)
        return cache[mask]

    C_l = np.full(n - 1, -np.inf)
    skipped = 0
    for _ in range(samples):
        a, b = size_pairs[rng.integers(len(size_pairs))]
        perm = rng.permutation(n)
        S, T = perm[:a], perm[:b]
        i = int(rng.choice(perm[b:]))
        den = gains_of(S)[i]
        if den <= DEGENERATE_GAIN:
            skipped += 1
            continue
        C_l[b - a - 1] = max(C_l[b - a - 1], gains_of(T)[i] / den)

    C_l[np.isneginf(C_l)] = np.nan
    return _summarize(C_l, SAMPLED, samples, skipped)


# probabilistic bound for i.i.d. measurement vectors

@dataclass(frozen=True)
class Theorem2Params:
    sigma_h: float
    C: float
    q: float
    n: int
    m: int
    lambda_max_P: float
    lambda_min_P: float
    sigma: float

    def __post_init__(self):
        if self.q <= 0:
            raise InvalidParamsError(f"deviation q must be positive, got {self.q}")
        if self.lambda_min_P <= 0 or self.lambda_max_P < self.lambda_min_P:
            raise InvalidParamsError(
                f"need 0 < lambda_min <= lambda_max, got {self.lambda_min_P}, {self.lambda_max_P}")
        if self.C < self.m * self.sigma_h**2 * (1.0 - 1e-12):
            raise InvalidParamsError(
                f"norm bound C={self.C} is below the mean squared norm m*sigma_h^2={self.m * self.sigma_h**2}")
        if self.sigma <= 0 or self.sigma_h < 0 or self.n < 1 or self.m < 1:
            raise InvalidParamsError("sigma, n and m must be positive and sigma_h non-negative")

    @staticmethod
    def from_prior(P_pred, sigma: float, sigma_h: float, C: float, q: float, n: int) -> "Theorem2Params":
        eigvals = la.eigvalsh(validate_spd(P_pred, "P_pred"))
        return Theorem2Params(sigma_h=sigma_h, C=C, q=q, n=n, m=eigvals.size,
                              lambda_max_P=float(eigvals[-1]), lambda_min_P=float(eigvals[0]),
                              sigma=sigma)

    @property
    def spectral_threshold(self) -> float:
        return self.n * self.sigma_h**2 + self.q


def theorem2_phi(lambda_min_P: float, sigma: float, sigma_h: float, n: int, q: float) -> float:
    """Tightest admissible phi: (1/lambda_min + (n sigma_h^2 + q) / sigma^2)^{-1}."""
    return 1.0 / (1.0 / lambda_min_P + (n * sigma_h**2 + q) / sigma**2)


def curvature_bound_from_phi(lambda_max: float, phi: float, sigma: float, C: float) -> float:
    s2 = sigma**2
    return lambda_max**2 * (s2 + lambda_max * C) / (phi**2 * (s2 + phi * C))


def theorem2_curvature_bound(params: Theorem2Params) -> float:
    phi = theorem2_phi(params.lambda_min_P, params.sigma, params.sigma_h, params.n, params.q)
    return curvature_bound_from_phi(params.lambda_max_P, phi, params.sigma, params.C)


def theorem2_success_probability(params: Theorem2Params) -> float:
    """Lower bound on P(spectral event), clamped to [0, 1]."""
    s2h = params.sigma_h**2
    if params.C <= s2h:
        raise InvalidParamsError(f"C={params.C} must exceed sigma_h^2={s2h}")
    exponent = -(params.q**2 / 2.0) / ((params.C - s2h) * (params.n * s2h + params.q / 3.0))
    return min(1.0, max(0.0, 1.0 - params.m * math.exp(exponent)))


@dataclass(frozen=True)
class Theorem2Report:
    trials: int
    event_count: int
    violations: int
    p_bound: float
    curvature_bound: float
    max_curvature: float
    skipped: int

    @property
    def event_frequency(self) -> float:
        return self.event_count / self.trials


def theorem2_empirical_check(m: int, n: int, sigma_h: float, C: float, q: float, sigma: float,
                             P_pred, trials: int, seed, cap: int = EXACT_CAP) -> Theorem2Report:
    """Draw sphere measurement sets, test the spectral event and the conditional curvature bound."""
    params = Theorem2Params.from_prior(P_pred, sigma, sigma_h, C, q, n)
    if params.m != m:
        raise InvalidParamsError(f"P_pred is {params.m}x{params.m}, expected m={m}")
    if trials < 1:
        raise InvalidParamsError(f"trials must be positive, got {trials}")
    bound = theorem2_curvature_bound(params)
    p_bound = theorem2_success_probability(params)

    event_count, violations, skipped = 0, 0, 0
    max_curvature = 0.0
    for child in np.random.SeedSequence(seed).spawn(trials):
        A = sphere_measurements(np.random.default_rng(child), n, m, sigma_h)
        if la.eigvalsh(A.T @ A)[-1] > params.spectral_threshold:
            continue
        event_count += 1
        report = exact_curvature(P_pred, A, sigma, cap=cap)
        skipped += report.skipped
        max_curvature = max(max_curvature, report.C_max)
        if report.C_max > bound * (1.0 + 1e-9):
            violations += 1
            logger.warning("curvature %.6g exceeds bound %.6g under the spectral event", report.C_max, bound)
    return Theorem2Report(trials=trials, event_count=event_count, violations=violations,
                          p_bound=p_bound, curvature_bound=bound,
                          max_curvature=max_curvature, skipped=skipped)


__all__ = [
    "CurvatureReport", "Theorem2Params", "Theorem2Report",
    "exact_curvature", "sampled_curvature", "curvature_from_gains",
    "theorem2_phi", "theorem2_curvature_bound", "curvature_bound_from_phi",
    "theorem2_success_probability", "theorem2_empirical_check",
]
