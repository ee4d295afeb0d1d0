import numpy as np
import pytest
from hypothesis import given, settings
from numpy.testing import assert_allclose

from sensor_scheduler.processing.errors import InvalidCovarianceError, InvalidParamsError
from sensor_scheduler.processing.state_space import (
    CovarianceState, StateSpaceModel, filter_mean, filtered_covariance, initial_state, kalman_step,
    predict_covariance, random_spd, selection_matrix, simulate, sphere_measurements, validate_spd,
)

from strategies import chains, instances


# prediction

def test_predict_identity_noise_only():
    assert_allclose(predict_covariance(np.eye(2), np.zeros((2, 2)), 1.0), np.eye(2))


def test_predict_random_walk():
    assert_allclose(predict_covariance(np.eye(3), np.eye(3), 1.0), 2 * np.eye(3))


def test_predict_scaled_transition():
    P = predict_covariance(np.diag([0.3, 0.7]), 0.8 * np.eye(2), np.sqrt(0.2))
    assert_allclose(P, np.diag([0.392, 0.648]), rtol=1e-12)


def test_predict_matches_formula():
    rng = np.random.default_rng(3)
    H = rng.normal(size=(4, 4))
    B = rng.normal(size=(4, 4))
    P = B @ B.T + np.eye(4)
    assert_allclose(predict_covariance(P, H, 0.5), H @ P @ H.T + 0.25 * np.eye(4), rtol=1e-12)


@given(instances())
@settings(deadline=None, max_examples=50)
def test_predict_floor_is_process_noise(instance):
    P, _, sigma = instance
    H = np.random.default_rng(0).normal(size=P.shape)
    eigvals = np.linalg.eigvalsh(predict_covariance(P, H, sigma))
    assert eigvals[0] >= sigma**2 * (1 - 1e-10)


def test_predict_shape_mismatch():
    with pytest.raises(InvalidParamsError):
        predict_covariance(np.eye(2), np.eye(3), 1.0)


def test_predict_rejects_non_positive_sigma():
    with pytest.raises(InvalidParamsError):
        predict_covariance(np.eye(2), np.eye(2), 0.0)


# filtering

def test_filtered_scalar():
    assert_allclose(filtered_covariance([[1.0]], [[1.0]], 1.0), [[0.5]])


def test_filtered_empty_selection_is_prior():
    P = np.diag([1.0, 2.0])
    assert_allclose(filtered_covariance(P, np.empty((0, 2)), 1.0), P)



@pytest.mark.parametrize("seed, m, n", [(0, 3, 5), (1, 4, 2), (2, 1, 3), (3, 6, 6)])
def test_filtered_all_sensors_matches_gain_form(seed, m, n):
    rng = np.random.default_rng(seed)
    P = random_spd(rng, m, 20.0)
    A = rng.normal(size=(n, m))
    sigma = 0.7
    innovation = A @ P @ A.T + sigma**2 * np.eye(n)
    expected = P - P @ A.T @ np.linalg.solve(innovation, A @ P)
    assert_allclose(filtered_covariance(P, A, sigma), expected, rtol=1e-9, atol=1e-12)

@given(chains(max_m=5, max_k=6))
@settings(deadline=None, max_examples=60)
def test_filtered_trace_never_increases(chain):
    P, A, sigma, order = chain
    traces = [np.trace(filtered_covariance(P, A[order[:j]], sigma)) for j in range(len(order) + 1)]
    assert np.all(np.diff(traces) <= 1e-10)


def test_kalman_step_composes_predict_and_filter():
    rng = np.random.default_rng(5)
    H = 0.9 * np.eye(3)
    A_S = rng.normal(size=(2, 3))
    state = kalman_step(CovarianceState(P_pred=np.eye(3), P_filt=np.eye(3)), H, A_S, 0.7)
    P_pred = predict_covariance(np.eye(3), H, 0.7)
    assert state.t == 1
    assert_allclose(state.P_pred, P_pred)
    assert_allclose(state.P_filt, filtered_covariance(P_pred, A_S, 0.7))


def test_filter_mean_scalar():
    x = filter_mean([0.0], [[1.0]], [[1.0]], [2.0], 1.0)
    assert_allclose(x, [1.0])


def test_filter_mean_without_sensors_keeps_prediction():
    x_pred = np.array([1.0, -2.0])
    assert_allclose(filter_mean(x_pred, np.eye(2), np.empty((0, 2)), [], 1.0), x_pred)


# validation

def test_validate_accepts_spd():
    P = np.array([[2.0, 0.5], [0.5, 1.0]])
    assert_allclose(validate_spd(P), P)


def test_validate_clamps_tiny_negative_eigenvalue():
    P = validate_spd(np.diag([1.0, -1e-13]))
    assert np.linalg.eigvalsh(P)[0] > 0
    np.linalg.cholesky(P)


@pytest.mark.parametrize("M", [
    np.diag([1.0, -1.0]),
    np.array([[1.0, 2.0], [0.0, 1.0]]),
    np.array([[np.nan, 0.0], [0.0, 1.0]]),
    np.ones((2, 3)),
    np.empty((0, 0)),
])
def test_validate_rejects(M):
    with pytest.raises(InvalidCovarianceError):
        validate_spd(M)


# models and simulation

def _model(horizon=1, **kwargs):
    return StateSpaceModel.generate(m=3, n=5, sigma=0.5, horizon=horizon, seed=11, **kwargs)


def test_generate_shapes():
    model = _model(horizon=4)
    assert len(model.A_t) == 4
    assert model.measurement(3).shape == (5, 3)
    assert_allclose(model.transition(7), np.eye(3))
    with pytest.raises(InvalidParamsError):
        model.measurement(4)


def test_generate_is_seeded():
    assert_allclose(_model().measurement(0), _model().measurement(0))


def test_sphere_rows_have_fixed_norm():
    A = sphere_measurements(np.random.default_rng(0), 50, 4, 0.5)
    assert_allclose(np.linalg.norm(A, axis=1), np.sqrt(4) * 0.5)


def test_model_rejects_bad_shapes():
    with pytest.raises(InvalidParamsError):
        StateSpaceModel(m=2, n=3, sigma=1.0, Sigma_x=np.eye(2), H_t=(np.eye(2),), A_t=(np.ones((2, 2)),))
    with pytest.raises(InvalidParamsError):
        StateSpaceModel(m=2, n=3, sigma=-1.0, Sigma_x=np.eye(2), H_t=(np.eye(2),), A_t=(np.ones((3, 2)),))
    with pytest.raises(InvalidCovarianceError):
        StateSpaceModel(m=2, n=3, sigma=1.0, Sigma_x=-np.eye(2), H_t=(np.eye(2),), A_t=(np.ones((3, 2)),))


def test_initial_state_uses_prior():
    state = initial_state(_model())
    assert state.t == 0
    assert_allclose(state.P_filt, np.eye(3))


def test_simulate_is_deterministic():
    model = _model(horizon=6)
    a, b = simulate(model, 6, seed=42), simulate(model, 6, seed=42)
    assert len(a) == 6
    assert a.measurements.shape == (6, 5)
    assert_allclose(a.states, b.states)
    assert_allclose(a.measurements, b.measurements)
    assert not np.allclose(a.states, simulate(model, 6, seed=43).states)


def test_simulate_rejects_empty_horizon():
    with pytest.raises(InvalidParamsError):
        simulate(_model(), 0, seed=0)


def test_simulate_without_noise_follows_the_dynamics():
    rng = np.random.default_rng(8)
    H_t = tuple(rng.normal(scale=0.5, size=(3, 3)) for _ in range(4))
    A = rng.normal(size=(2, 3))
    model = StateSpaceModel(m=3, n=2, sigma=1e-12, Sigma_x=np.eye(3), H_t=H_t, A_t=(A,))
    trajectory = simulate(model, 4, seed=3)
    for t in range(3):
        assert_allclose(trajectory.states[t + 1], H_t[t] @ trajectory.states[t], atol=1e-9)
    assert_allclose(trajectory.measurements, trajectory.states @ A.T, atol=1e-9)


@pytest.mark.slow
def test_initial_state_covariance_matches_prior():
    Sigma_x = np.array([[1.0, 0.3], [0.3, 0.5]])
    model = StateSpaceModel(m=2, n=1, sigma=0.6, Sigma_x=Sigma_x, H_t=(np.eye(2),), A_t=(np.ones((1, 2)),))
    x0 = np.array([simulate(model, 1, seed=s).states[0] for s in range(20000)])
    error = np.linalg.norm(np.cov(x0.T) - Sigma_x) / np.linalg.norm(Sigma_x)
    assert error < 0.05


@pytest.mark.slow
def test_simulated_state_covariance_matches_prediction():
    Sigma_x = np.array([[1.0, 0.3], [0.3, 0.5]])
    H = np.array([[0.9, 0.1], [0.0, 0.8]])
    model = StateSpaceModel(m=2, n=1, sigma=0.6, Sigma_x=Sigma_x, H_t=(H,), A_t=(np.ones((1, 2)),))
    x1 = np.array([simulate(model, 2, seed=s).states[1] for s in range(4000)])
    assert_allclose(np.cov(x1.T), predict_covariance(Sigma_x, H, 0.6), atol=0.1)


def test_selection_matrix():
    S = selection_matrix(np.random.default_rng(1), 10, 4)
    assert S.shape == (4, 10)
    assert_allclose(S.sum(axis=1), 1.0)
    assert np.linalg.matrix_rank(S) == 4
    with pytest.raises(InvalidParamsError):
        selection_matrix(np.random.default_rng(1), 10, 0)
