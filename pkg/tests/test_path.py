import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparse_pspline.exceptions import (DegenerateDirectionError, DomainError,
                                       IterationsExceededError, NotPSDError, ShapeError)
from sparse_pspline.path import (cd_solve, kkt_residual, lars_path, psd_sqrt, soft_threshold,
                                 transform, transform_with_root)
from sparse_pspline.smoother import factorize, influence_matrix


def random_problem(rng, n, d, scale=None):
    X = rng.normal(size=(n, d))
    y = 2 * X[:, 0] - X[:, 1] + rng.normal(size=n)
    scale = np.ones(d) if scale is None else scale
    return transform_with_root(X, y, np.eye(n), scale)


def spline_problem(rng, n=40, d=5, lam=1e-4):
    t = np.sort(rng.uniform(size=n))
    sys = factorize(t, 2)
    X = rng.normal(size=(n, d))
    y = X[:, 0] + np.sin(2 * np.pi * t) + 0.2 * rng.normal(size=n)
    scale = np.abs(rng.normal(size=d)) + 0.1
    return X, y, influence_matrix(sys, lam), scale


class TestPsdSqrt:
    def test_identity(self):
        assert np.allclose(psd_sqrt(np.eye(4)), np.eye(4), atol=1e-15)

    def test_diagonal(self):
        assert np.allclose(psd_sqrt(np.diag([4.0, 1.0, 0.0])), np.diag([2.0, 1.0, 0.0]), atol=1e-15)

    def test_complement_of_influence(self, rng):
        sys = factorize(np.sort(rng.uniform(size=30)), 2)
        M = np.eye(30) - influence_matrix(sys, 0.05)
        T = psd_sqrt(M)
        assert np.array_equal(T, T.T)
        assert np.abs(T.T @ T - M).max() <= 1e-7

    def test_small_negative_clamped(self):
        T = psd_sqrt(np.diag([1.0, -1e-9]))
        assert T[1, 1] == 0.0

    def test_rejects_indefinite(self):
        with pytest.raises(NotPSDError):
            psd_sqrt(np.diag([1.0, -0.1]))

    def test_rejects_nonsquare(self):
        with pytest.raises(ShapeError):
            psd_sqrt(np.ones((2, 3)))


class TestTransform:
    def test_unit_weights(self, rng):
        X, y, A, _ = spline_problem(rng)
        tp = transform(X, y, A, np.ones(X.shape[1]))
        T = psd_sqrt(np.eye(len(y)) - A)
        assert np.allclose(tp.X_star, T @ X)
        assert np.allclose(tp.y_star, T @ y)

    def test_zero_scale_dropped(self, rng):
        X, y, A, scale = spline_problem(rng)
        scale[2] = 0.0
        tp = transform(X, y, A, scale)
        assert 2 not in tp.active_map and tp.X_star.shape[1] == X.shape[1] - 1
        path = lars_path(tp)
        for lam in np.linspace(0, path.breakpoints[0], 7):
            assert path.solve_original(lam)[2] == 0.0

    def test_objective_equivalence(self, rng):
        X, y, A, scale = spline_problem(rng)
        tp = transform(X, y, A, scale)
        n = len(y)
        for _ in range(5):
            b_star = rng.normal(size=X.shape[1])
            beta = tp.to_original(b_star)
            r = y - X @ beta
            profiled = r @ (np.eye(n) - A) @ r / n
            assert tp.objective(b_star, 0.0) == pytest.approx(profiled, abs=1e-8)

    @pytest.mark.parametrize("bad", ["shape", "negative", "root"])
    def test_validation(self, rng, bad):
        X, y = rng.normal(size=(10, 3)), rng.normal(size=10)
        scale, T = np.ones(3), np.eye(10)
        if bad == "shape":
            scale = np.ones(2)
        elif bad == "negative":
            scale = np.array([1.0, -1.0, 1.0])
        else:
            T = np.eye(9)
        with pytest.raises((ShapeError, DomainError)):
            transform_with_root(X, y, T, scale)


class TestLarsPath:
    def test_all_zero_above_lambda_max(self, rng):
        tp = random_problem(rng, 30, 6)
        path = lars_path(tp)
        assert path.breakpoints[0] == pytest.approx(tp.lambda_max, rel=1e-12)
        assert not np.any(path.coefs[0])
        for lam in (tp.lambda_max, 2 * tp.lambda_max):
            assert not np.any(path.solve_at(lam))
            assert kkt_residual(tp, np.zeros(6), lam) == 0.0

    def test_zero_lambda_is_least_squares(self, rng):
        tp = random_problem(rng, 40, 6)
        path = lars_path(tp)
        ols, *_ = np.linalg.lstsq(tp.X_star, tp.y_star, rcond=None)
        assert np.abs(path.solve_at(0.0) - ols).max() <= 1e-8

    def test_small_instance_matches_cd(self, rng):
        tp = random_problem(rng, 20, 5)
        path = lars_path(tp)
        for lam in np.linspace(0, path.breakpoints[0], 27)[1:-1]:
            assert np.abs(path.solve_at(lam) - cd_solve(tp, lam)).max() <= 1e-6

    def test_breakpoints_decrease_to_zero(self, rng):
        path = lars_path(random_problem(rng, 50, 12))
        assert np.all(np.diff(path.breakpoints) < 0)
        assert path.breakpoints[-1] == 0.0

    def test_piecewise_linear_between_breakpoints(self, rng):
        tp = random_problem(rng, 40, 8)
        path = lars_path(tp)
        for k in range(len(path.breakpoints) - 1):
            lo, hi = path.breakpoints[k + 1], path.breakpoints[k]
            mid = 0.5 * (lo + hi)
            assert np.allclose(path.solve_at(mid), cd_solve(tp, mid), atol=1e-6)

    def test_objective_monotone(self, rng):
        tp = random_problem(rng, 40, 8)
        path = lars_path(tp)
        lams = np.linspace(path.breakpoints[0], 0, 60)
        vals = [tp.objective(path.solve_at(lam), lam) for lam in lams]
        assert np.all(np.diff(vals) <= 1e-12)

    def test_exact_zeros_are_bitwise(self, rng):
        tp = random_problem(rng, 60, 15)
        path = lars_path(tp)
        for lam in np.linspace(0.05, 0.95, 10) * path.breakpoints[0]:
            b = path.solve_at(lam)
            nz = np.flatnonzero(b)
            assert np.all(np.abs(b[nz]) > 1e-14)

    def test_duplicate_column_raises_with_indices(self, rng):
        X = rng.normal(size=(30, 4))
        X[:, 3] = X[:, 1]
        y = X[:, 1] + 0.1 * rng.normal(size=30)
        tp = transform_with_root(X, y, np.eye(30), np.ones(4))
        with pytest.raises(DegenerateDirectionError) as info:
            lars_path(tp)
        assert set(info.value.indices) == {1, 3}

    def test_more_features_than_samples(self, rng):
        tp = random_problem(rng, 20, 35)
        path = lars_path(tp)
        for lam in np.linspace(0.01, 1, 15) * path.breakpoints[0]:
            assert kkt_residual(tp, path.solve_at(lam), lam) <= 1e-6

    def test_candidates_interleave(self, rng):
        path = lars_path(random_problem(rng, 30, 5))
        c = path.candidates()
        assert c.size == 2 * path.breakpoints.size - 1
        assert np.all(np.diff(c) < 0)

    def test_negative_lambda(self, rng):
        path = lars_path(random_problem(rng, 30, 5))
        with pytest.raises(DomainError):
            path.solve_at(-1.0)

    @given(seed=st.integers(0, 2**32 - 1), n=st.integers(20, 80), d=st.integers(2, 25))
    @settings(max_examples=40, deadline=None)
    def test_kkt_at_every_breakpoint(self, seed, n, d):
        rng = np.random.default_rng(seed)
        tp = random_problem(rng, n, d)
        path = lars_path(tp)
        for lam, coef in zip(path.breakpoints, path.coefs):
            assert kkt_residual(tp, coef, lam) <= 1e-6


class TestCoordinateDescent:
    def test_zero_above_lambda_max(self, rng):
        tp = random_problem(rng, 30, 5)
        assert not np.any(cd_solve(tp, tp.lambda_max * 1.0001))

    def test_orthonormal_design_soft_threshold(self, rng):
        n, d = 50, 6
        Q, _ = np.linalg.qr(rng.normal(size=(n, d)))
        X = np.sqrt(n) * Q  # X'X / n = I
        y = X @ np.array([2.0, -1.0, 0.5, 0.0, 0.1, -0.05]) + 0.3 * rng.normal(size=n)
        tp = transform_with_root(X, y, np.eye(n), np.ones(d))
        for lam in (0.0, 0.1, 0.5, 1.5):
            closed = soft_threshold(X.T @ y / n, lam / 2)
            assert np.abs(cd_solve(tp, lam) - closed).max() <= 1e-8
            assert np.abs(lars_path(tp).solve_at(lam) - closed).max() <= 1e-8

    def test_iteration_cap(self, rng):
        tp = random_problem(rng, 30, 10)
        with pytest.raises(IterationsExceededError) as info:
            cd_solve(tp, 1e-3, tol=0.0, max_sweeps=3)
        assert info.value.sweeps == 3

    def test_soft_threshold(self):
        assert np.array_equal(soft_threshold(np.array([-3.0, -0.5, 0.5, 3.0]), 1.0),
                              np.array([-2.0, 0.0, 0.0, 2.0]))


class TestKKTResidual:
    def test_exact_solution_small(self, rng):
        tp = random_problem(rng, 40, 6)
        lam = 0.3 * tp.lambda_max
        assert kkt_residual(tp, lars_path(tp).solve_at(lam), lam) <= 1e-8

    def test_perturbation_detected(self, rng):
        tp = random_problem(rng, 40, 6)
        lam = 0.3 * tp.lambda_max
        b = lars_path(tp).solve_at(lam)
        j = np.flatnonzero(b)[0]
        b[j] += 1e-3
        assert kkt_residual(tp, b, lam) > 1e-4
