"""Linear time-varying state-space model and Kalman covariance recursions.

x(t+1) = H(t) x(t) + w(t),  y(t) = A(t) x(t) + v(t), with Q(t) = sigma^2 I_m and
R(t) = sigma^2 I_n. Row j of A(t) is the measurement vector of sensor j.
"""
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import scipy.linalg as la

from .errors import InvalidCovarianceError, InvalidParamsError

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-10
SPD_TOL = 1e-10

MEASUREMENT_KINDS = ("gaussian", "sphere")


def symmetrize(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def validate_spd(M, name: str = "covariance", tol: float = SPD_TOL) -> np.ndarray:
    """Return a symmetric positive-definite copy of `M` or raise.

    Eigenvalues down to -tol * max(1, lambda_max) are accepted and clamped up to
    tol * max(1, lambda_max); anything more negative is rejected.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] == 0:
        raise InvalidCovarianceError(f"{name} must be a non-empty square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InvalidCovarianceError(f"{name} contains non-finite entries")

    scale = max(1.0, float(np.max(np.abs(M))))
    if np.max(np.abs(M - M.T)) > SYMMETRY_TOL * scale:
        raise InvalidCovarianceError(f"{name} is not symmetric")
    M = symmetrize(M)
    try:
        la.cho_factor(M, lower=True)
        return M
    except la.LinAlgError:
        pass

    # not numerically positive definite: reject or clamp
    eigvals, eigvecs = la.eigh(M)
    floor = tol * max(1.0, float(eigvals[-1]))
    if eigvals[0] < -floor:
        raise InvalidCovarianceError(
            f"{name} is not positive definite (min eigenvalue {eigvals[0]:.3e})")
    logger.warning("%s has min eigenvalue %.3e, clamping to %.3e", name, eigvals[0], floor)
    eigvals = np.maximum(eigvals, floor)
    return symmetrize((eigvecs * eigvals) @ eigvecs.T)


def spd_inverse(M: np.ndarray) -> np.ndarray:
    """Inverse of an SPD matrix through its Cholesky factor."""
    factor = la.cho_factor(M, lower=True)
    return symmetrize(la.cho_solve(factor, np.eye(M.shape[0])))


def _check_sigma(sigma: float):
    if not (np.isfinite(sigma) and sigma > 0):
        raise InvalidParamsError(f"sigma must be positive, got {sigma}")


@dataclass(frozen=True)
class CovarianceState:
    P_pred: np.ndarray
    P_filt: np.ndarray
    t: int = 0


def predict_covariance(P_filt, H, sigma: float) -> np.ndarray:
    """P_{t|t-1} = H P_{t-1|t-1} H^T + sigma^2 I."""
    _check_sigma(sigma)
    P_filt = validate_spd(P_filt, "P_filt")
    H = np.asarray(H, dtype=float)
    if H.shape != P_filt.shape:
        raise InvalidParamsError(f"transition matrix shape {H.shape} does not match {P_filt.shape}")
    return symmetrize(H @ P_filt @ H.T + sigma**2 * np.eye(P_filt.shape[0]))


def filtered_covariance(P_pred, A_S, sigma: float) -> np.ndarray:
    """P_{t|t} = (P_{t|t-1}^{-1} + sigma^-2 A_S^T A_S)^{-1} by direct factorization."""
    _check_sigma(sigma)
    P_pred = validate_spd(P_pred, "P_pred")
    A_S = np.asarray(A_S, dtype=float).reshape(-1, P_pred.shape[0])
    if A_S.shape[0] == 0:
        return P_pred
    fisher = spd_inverse(P_pred) + (A_S.T @ A_S) / sigma**2
    return spd_inverse(symmetrize(fisher))


def kalman_step(state: CovarianceState, H, A_S, sigma: float) -> CovarianceState:
    P_pred = predict_covariance(state.P_filt, H, sigma)
    return CovarianceState(P_pred=P_pred,
                           P_filt=filtered_covariance(P_pred, A_S, sigma),
                           t=state.t + 1)


def filter_mean(x_pred, P_pred, A_S, y_S, sigma: float) -> np.ndarray:
    """Information-form update of the state estimate for the selected sensors."""
    x_pred = np.asarray(x_pred, dtype=float)
    A_S = np.asarray(A_S, dtype=float).reshape(-1, x_pred.size)
    if A_S.shape[0] == 0:
        return x_pred.copy()
    P_filt = filtered_covariance(P_pred, A_S, sigma)
    innovation = np.asarray(y_S, dtype=float) - A_S @ x_pred
    return x_pred + P_filt @ A_S.T @ innovation / sigma**2


# instance generators

def gaussian_measurements(rng: np.random.Generator, n: int, m: int, sigma_h: float) -> np.ndarray:
    return rng.normal(0.0, sigma_h, size=(n, m))


def sphere_measurements(rng: np.random.Generator, n: int, m: int, sigma_h: float) -> np.ndarray:
    """Rows uniform on the sphere of radius sqrt(m sigma_h^2): covariance sigma_h^2 I, norm fixed."""
    rows = rng.standard_normal(size=(n, m))
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    return rows * np.sqrt(m) * sigma_h


def random_spd(rng: np.random.Generator, m: int, condition: float = 10.0) -> np.ndarray:
    """Random SPD matrix with eigenvalues spread log-uniformly over [1/sqrt(cond), sqrt(cond)]."""
    Q, _ = np.linalg.qr(rng.standard_normal(size=(m, m)))
    half = 0.5 * np.log(condition)
    eigvals = np.exp(rng.uniform(-half, half, size=m))
    return symmetrize((Q * eigvals) @ Q.T)


def selection_matrix(rng: np.random.Generator, n: int, rank: int) -> np.ndarray:
    if not 1 <= rank <= n:
        raise InvalidParamsError(f"rank must lie in [1, {n}], got {rank}")
    components = np.sort(rng.choice(n, size=rank, replace=False))
    return np.eye(n)[components]


def _measurement_rows(kind: str, rng, n, m, sigma_h):
    if kind == "gaussian":
        return gaussian_measurements(rng, n, m, sigma_h)
    if kind == "sphere":
        return sphere_measurements(rng, n, m, sigma_h)
    raise InvalidParamsError(f"unknown measurement generator '{kind}'")


@dataclass(frozen=True)
class StateSpaceModel:
    m: int
    n: int
    sigma: float
    Sigma_x: np.ndarray
    H_t: Tuple[np.ndarray, ...]
    A_t: Tuple[np.ndarray, ...]

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise InvalidParamsError(f"m and n must be positive, got m={self.m}, n={self.n}")
        _check_sigma(self.sigma)
        object.__setattr__(self, "Sigma_x", validate_spd(self.Sigma_x, "Sigma_x"))
        H_t = tuple(np.asarray(H, dtype=float) for H in self.H_t)
        A_t = tuple(np.asarray(A, dtype=float) for A in self.A_t)
        if not H_t or not A_t:
            raise InvalidParamsError("at least one transition and one measurement matrix required")
        for H in H_t:
            if H.shape != (self.m, self.m):
                raise InvalidParamsError(f"H_t must be {self.m}x{self.m}, got {H.shape}")
        for A in A_t:
            if A.shape != (self.n, self.m):
                raise InvalidParamsError(f"A_t must be {self.n}x{self.m}, got {A.shape}")
        object.__setattr__(self, "H_t", H_t)
        object.__setattr__(self, "A_t", A_t)

    @staticmethod
    def _at(seq, t, label):
        if len(seq) == 1:
            return seq[0]
        if t >= len(seq):
            raise InvalidParamsError(f"{label} has {len(seq)} steps, step {t} requested")
        return seq[t]

    def transition(self, t: int) -> np.ndarray:
        return self._at(self.H_t, t, "H_t")

    def measurement(self, t: int) -> np.ndarray:
        return self._at(self.A_t, t, "A_t")

    @staticmethod
    def generate(m: int, n: int, sigma: float, horizon: int, seed,
                 measurements: str = "gaussian", sigma_h: float = 1.0,
                 transition_scale: float = 1.0, Sigma_x=None) -> "StateSpaceModel":
        """Model with H = transition_scale * I and a fresh A_t per step drawn from `measurements`."""
        rng = np.random.default_rng(seed)
        A_t = tuple(_measurement_rows(measurements, rng, n, m, sigma_h) for _ in range(horizon))
        return StateSpaceModel(m=m, n=n, sigma=sigma,
                               Sigma_x=np.eye(m) if Sigma_x is None else Sigma_x,
                               H_t=(transition_scale * np.eye(m),), A_t=A_t)


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray
    measurements: np.ndarray

    def __len__(self):
        return self.states.shape[0]


def simulate(model: StateSpaceModel, T: int, seed) -> Trajectory:
    """Sample x_0..x_{T-1} and y_0..y_{T-1}; deterministic given seed."""
    if T < 1:
        raise InvalidParamsError(f"horizon must be at least 1, got {T}")
    rng = np.random.default_rng(seed)
    chol = np.linalg.cholesky(model.Sigma_x)

    states = np.empty((T, model.m))
    measurements = np.empty((T, model.n))
    x = chol @ rng.standard_normal(model.m)
    for t in range(T):
        states[t] = x
        measurements[t] = model.measurement(t) @ x + model.sigma * rng.standard_normal(model.n)
        x = model.transition(t) @ x + model.sigma * rng.standard_normal(model.m)
    return Trajectory(states=states, measurements=measurements)


def initial_state(model: StateSpaceModel) -> CovarianceState:
    return CovarianceState(P_pred=model.Sigma_x, P_filt=model.Sigma_x, t=0)


__all__ = [
    "CovarianceState", "StateSpaceModel", "Trajectory",
    "predict_covariance", "filtered_covariance", "kalman_step", "filter_mean",
    "simulate", "initial_state", "validate_spd", "spd_inverse", "symmetrize",
    "gaussian_measurements", "sphere_measurements", "random_spd", "selection_matrix",
    "MEASUREMENT_KINDS",
]
