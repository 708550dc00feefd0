import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pipefuse.core import SensorKind, trace_from_pairs
from pipefuse.ekf import (
    FilterState,
    NumericFailureError,
    ProcessModel,
    SingularBracketError,
    numeric_jacobian,
    predict,
    random_walk_model,
    run_filter,
    update,
)


def scalar_model(q, r, f=None, h=None, **kw):
    ident = lambda x: x
    return ProcessModel(1, f or ident, h or ident, np.array([[q]]), np.array([[r]]), **kw)


class TestNumericJacobian:
    def test_identity(self):
        x = np.array([1.0, -2.0, 3.0])
        assert np.allclose(numeric_jacobian(lambda v: v, x), np.eye(3), atol=1e-9)

    def test_square_matches_analytic_derivative(self):
        J = numeric_jacobian(lambda v: v**2, np.array([3.0]), eps=1e-5)
        assert abs(J[0, 0] - 6.0) < 1e-6

    def test_constant(self):
        J = numeric_jacobian(lambda v: np.array([7.0, -1.0]), np.array([0.5, 2.0]))
        assert np.array_equal(J, np.zeros((2, 2)))

    def test_nonpositive_eps_rejected(self):
        with pytest.raises(ValueError):
            numeric_jacobian(lambda v: v, np.array([1.0]), eps=0.0)

    def test_divergent_function_raises(self):
        def bad(v):
            return np.array([float("inf")])

        with pytest.raises(NumericFailureError):
            numeric_jacobian(bad, np.array([1.0]))


class TestPredict:
    def test_identity_dynamics_no_noise(self):
        prior = predict(FilterState([5.0], [[1.0]]), random_walk_model(0.0, 1.0))
        assert prior.x_hat[0] == 5.0
        assert prior.P[0, 0] == 1.0
        assert prior.tick == 1

    def test_process_noise_inflates_covariance(self):
        prior = predict(FilterState([0.0], [[1.0]]), random_walk_model(0.1, 1.0))
        assert prior.P[0, 0] == pytest.approx(1.1, abs=1e-12)

    def test_doubling_dynamics(self):
        prior = predict(FilterState([1.0], [[1.0]]), scalar_model(0.0, 1.0, f=lambda x: 2 * x))
        assert prior.x_hat[0] == pytest.approx(2.0, abs=1e-9)
        assert prior.P[0, 0] == pytest.approx(4.0, abs=1e-6)

    def test_nonfinite_transition_raises(self):
        model = scalar_model(0.0, 1.0, f=lambda x: np.full_like(x, np.inf))
        with pytest.raises(NumericFailureError):
            predict(FilterState([1.0], [[1.0]]), model)


class TestUpdate:
    def test_scalar_hand_computed_gain(self):
        post = update(FilterState([0.0], [[1.0]], tick=1), [2.0], scalar_model(0.0, 1.0))
        assert post.x_hat[0] == pytest.approx(1.0, abs=1e-12)
        assert post.P[0, 0] == pytest.approx(0.5, abs=1e-12)

    def test_uninformative_measurement_keeps_prior(self):
        prior = FilterState([3.0], [[1.0]], tick=1)
        post = update(prior, [2.0], scalar_model(0.0, 1e12))
        assert abs(post.x_hat[0] - prior.x_hat[0]) < 1e-9 * 2.0

    def test_perfect_prior_ignores_measurement(self):
        prior = FilterState([3.0], [[0.0]], tick=1)
        post = update(prior, [100.0], scalar_model(0.0, 1.0))
        assert post.x_hat[0] == 3.0

    def test_singular_bracket(self):
        model = scalar_model(0.0, 0.0, h=lambda x: 0.0 * x, H_jac=lambda x: np.array([[0.0]]))
        with pytest.raises(SingularBracketError):
            update(FilterState([0.0], [[1.0]], tick=1), [1.0], model)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            update(FilterState([0.0], [[1.0]]), [1.0, 2.0], scalar_model(0.0, 1.0))


class TestRunFilter:
    def test_single_measurement_is_predict_then_update(self):
        model = random_walk_model(0.1, 0.1)
        init = FilterState([0.0], [[1.0]])
        trace = trace_from_pairs([(0, 2.0)], "n0", SensorKind.TEMPERATURE)
        points = run_filter(model, init, trace)
        assert len(points) == 1
        direct = update(predict(init, model), [2.0], model)
        assert points[0].state == direct

    def test_constant_trace_converges_monotonically(self):
        # q = 0 scalar recursion: error |x_hat - c| shrinks every step.
        model = random_walk_model(0.0, 1.0)
        init = FilterState([0.0], [[1.0]])
        c = 10.0
        trace = trace_from_pairs([(t, c) for t in range(30)], "n0", SensorKind.TEMPERATURE)
        points = run_filter(model, init, trace)
        errors = [abs(p.estimate - c) for p in points]
        assert all(e2 <= e1 + 1e-12 for e1, e2 in zip(errors, errors[1:]))
        # q = 0 recursion averages all samples: error after k steps is c/(k+1)
        assert errors[-1] == pytest.approx(c / 31, abs=1e-9)

        # independent oracle: direct scalar recursion
        x, P = 0.0, 1.0
        for p in points:
            K = P / (P + 1.0)
            x = x + K * (c - x)
            P = (1 - K) * P
            assert p.estimate == pytest.approx(x, abs=1e-12)
            assert p.variance == pytest.approx(P, abs=1e-12)

    def test_smoothing_reduces_variance(self):
        rng = np.random.default_rng(7)
        values = 20.0 + rng.normal(0, np.sqrt(0.1), size=20)
        trace = trace_from_pairs(list(enumerate(values)), "n0", SensorKind.TEMPERATURE)
        init = FilterState([values[0]], [[1.0]])
        points = run_filter(random_walk_model(0.1, 0.1), init, trace)
        estimates = [p.estimate for p in points]
        assert np.var(estimates) <= np.var(values)

    def test_error_carries_failing_tick(self):
        model = scalar_model(0.0, 1.0, f=lambda x: np.full_like(x, np.nan))
        trace = trace_from_pairs([(7, 1.0)], "n0", SensorKind.TEMPERATURE)
        with pytest.raises(NumericFailureError, match="tick 7"):
            run_filter(model, FilterState([0.0], [[1.0]]), trace)


def random_linear_system(rng, n, m):
    A = rng.normal(size=(n, n))
    A *= 0.95 / max(np.abs(np.linalg.eigvals(A)))
    H = rng.normal(size=(m, n))
    q_root = rng.normal(size=(n, n)) * 0.3
    Q = q_root @ q_root.T + 1e-3 * np.eye(n)
    r_root = rng.normal(size=(m, m)) * 0.3
    R = r_root @ r_root.T + 1e-2 * np.eye(m)
    return A, H, Q, R


def kalman_oracle(A, H, Q, R, x0, P0, ys):
    """Plainly coded standard Kalman filter, independent of the ekf module."""
    x, P = np.array(x0, dtype=float), np.array(P0, dtype=float)
    out = []
    for y in ys:
        x = A @ x
        P = A @ P @ A.T + Q
        S = H @ P @ H.T + R
        K = P @ H.T @ np.linalg.inv(S)
        x = x + K @ (y - H @ x)
        P = (np.eye(len(x)) - K @ H) @ P
        out.append((x.copy(), P.copy()))
    return out


class TestLinearEquivalence:
    @pytest.mark.parametrize("seed", range(10))
    def test_matches_standard_kalman_filter(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 5))
        m = int(rng.integers(1, n + 1))
        A, H, Q, R = random_linear_system(rng, n, m)
        model = ProcessModel(
            n,
            f=lambda x: A @ x,
            h=lambda x: H @ x,
            Q=Q,
            R=R,
            F_jac=lambda x: A,
            H_jac=lambda x: H,
        )
        x0 = rng.normal(size=n)
        P0 = np.eye(n)
        ys = [rng.normal(size=m) for _ in range(50)]

        state = FilterState(x0, P0)
        oracle = kalman_oracle(A, H, Q, R, x0, P0, ys)
        for y, (ox, oP) in zip(ys, oracle):
            state = update(predict(state, model), y, model)
            assert np.max(np.abs(state.x_hat - ox)) < 1e-10
            assert np.max(np.abs(state.P - oP)) < 1e-10


class TestProperties:
    @pytest.mark.parametrize("seed", range(5))
    def test_posterior_covariance_never_grows(self, seed):
        rng = np.random.default_rng(100 + seed)
        n = int(rng.integers(1, 4))
        A, H, Q, R = random_linear_system(rng, n, n)  # full row rank H almost surely
        model = ProcessModel(n, lambda x: A @ x, lambda x: H @ x, Q, R,
                             F_jac=lambda x: A, H_jac=lambda x: H)
        state = FilterState(rng.normal(size=n), np.eye(n))
        for _ in range(20):
            prior = predict(state, model)
            state = update(prior, rng.normal(size=n), model)
            assert np.trace(state.P) <= np.trace(prior.P) + 1e-12

    def test_numeric_jacobian_agrees_with_analytic(self):
        A = np.array([[0.9, 0.1], [-0.2, 0.8]])
        rng = np.random.default_rng(3)
        for _ in range(100):
            x = rng.normal(scale=5.0, size=2)
            fn = lambda v: np.array([A[0] @ v + 0.01 * v[0] ** 2, A[1] @ v + np.sin(v[1])])
            analytic = np.array(
                [[A[0, 0] + 0.02 * x[0], A[0, 1]], [A[1, 0], A[1, 1] + np.cos(x[1])]]
            )
            J = numeric_jacobian(fn, x)
            assert np.max(np.abs(J - analytic)) / max(1.0, np.max(np.abs(analytic))) < 1e-4

    @given(
        x0=st.floats(-100, 100),
        p0=st.floats(0.01, 50),
        q=st.floats(0.001, 5),
        r=st.floats(0.001, 5),
        ys=st.lists(st.floats(-100, 100), min_size=1, max_size=30),
    )
    @settings(max_examples=50, deadline=None)
    def test_outputs_finite_for_finite_inputs(self, x0, p0, q, r, ys):
        model = random_walk_model(q, r)
        state = FilterState([x0], [[p0]])
        for y in ys:
            state = update(predict(state, model), [y], model)
            assert np.isfinite(state.x_hat).all()
            assert np.isfinite(state.P).all()
            assert state.P[0, 0] >= 0


class TestValidation:
    def test_filter_state_rejects_asymmetric_p(self):
        with pytest.raises(ValueError):
            FilterState([0.0, 0.0], [[1.0, 0.5], [0.0, 1.0]])

    def test_filter_state_rejects_negative_diagonal(self):
        with pytest.raises(ValueError):
            FilterState([0.0], [[-0.5]])

    def test_process_model_rejects_asymmetric_q(self):
        with pytest.raises(ValueError):
            ProcessModel(
                2,
                lambda x: x,
                lambda x: x,
                np.array([[1.0, 0.2], [0.0, 1.0]]),
                np.eye(2),
            )

    def test_process_model_rejects_bad_dim(self):
        with pytest.raises(ValueError):
            ProcessModel(0, lambda x: x, lambda x: x, np.eye(1), np.eye(1))
