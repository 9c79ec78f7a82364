import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparse_pspline.exceptions import (DegenerateKnotsError, DomainError, InsufficientDataError,
                                       ShapeError)
from sparse_pspline.smoother import (evaluate_spline, factorize, influence_matrix, smooth,
                                     trace_influence)


def system(rng, n=40, m=2):
    return factorize(np.sort(rng.uniform(size=n)), m)


class TestFactorize:
    def test_three_knot_example(self):
        sys = factorize([0.0, 0.5, 1.0], 2)
        assert sys.F2.shape == (3, 1)
        assert np.abs(sys.F2.T @ sys.S).max() <= 1e-12
        assert np.abs(sys.F1 @ sys.U - sys.S).max() <= 1e-12
        F = np.hstack([sys.F1, sys.F2])
        assert np.abs(F.T @ F - np.eye(3)).max() <= 1e-12

    def test_too_few_knots(self):
        with pytest.raises(InsufficientDataError):
            factorize([0.1, 0.9], 2)

    def test_near_duplicate_knots_are_degenerate(self):
        with pytest.raises(DegenerateKnotsError):
            factorize([0.5, 0.5 + 1e-15, 0.5 + 2e-15, 0.5 + 3e-15], 3)

    def test_arrays_are_read_only(self, rng):
        sys = system(rng)
        with pytest.raises(ValueError):
            sys.Sigma[0, 0] = 1.0


class TestInfluence:
    @pytest.mark.parametrize("m", [1, 2, 3])
    @pytest.mark.parametrize("lam", [1e-9, 1e-5, 1e-2, 10.0])
    def test_reproduces_nullspace(self, rng, m, lam):
        sys = system(rng, 30, m)
        A = influence_matrix(sys, lam)
        assert np.abs(A @ sys.S - sys.S).max() <= 1e-8
        assert np.abs(A - A.T).max() <= 1e-10
        ev = np.linalg.eigvalsh(A)
        assert ev.min() >= -1e-8 and ev.max() <= 1 + 1e-8
        assert np.sum(ev > 1 - 1e-8) >= m

    def test_large_lambda_is_polynomial_projection(self, rng):
        sys = system(rng, 30, 2)
        y = rng.normal(size=30)
        A = influence_matrix(sys, 1e6)
        coef, *_ = np.linalg.lstsq(sys.S, y, rcond=None)
        assert np.linalg.norm(A @ y - sys.S @ coef) <= 1e-3 * np.linalg.norm(y)

    def test_trace_matches_diagonal(self, rng):
        sys = system(rng)
        for lam in (1e-8, 1e-4, 1.0):
            assert trace_influence(sys, lam) == pytest.approx(np.trace(influence_matrix(sys, lam)),
                                                              abs=1e-8)

    def test_trace_limits_and_monotone(self, rng):
        sys = system(rng, 40, 2)
        grid = np.logspace(-14, 8, 60)
        tr = np.array([trace_influence(sys, lam) for lam in grid])
        assert np.all(np.diff(tr) <= 1e-10)
        assert tr[0] == pytest.approx(40, abs=0.05)
        assert tr[-1] == pytest.approx(2, abs=1e-3)

    @pytest.mark.parametrize("lam", [0.0, -1.0, np.inf, np.nan])
    def test_bad_lambda(self, rng, lam):
        with pytest.raises(DomainError):
            influence_matrix(system(rng), lam)

    def test_complement_sqrt(self, rng):
        sys = system(rng, 30)
        T = sys.complement_sqrt(0.05)
        M = np.eye(30) - influence_matrix(sys, 0.05)
        assert np.abs(T.T @ T - M).max() <= 1e-7
        v = rng.normal(size=30)
        assert np.allclose(sys.apply_complement(0.05, v), M @ v, atol=1e-10)


class TestSmooth:
    def test_polynomials_pass_through(self, rng):
        sys = system(rng)
        b0 = np.array([0.7, -2.0])
        out = smooth(sys, 0.1, sys.S @ b0)
        assert np.allclose(out.b, b0, atol=1e-10)
        assert np.abs(out.c).max() <= 1e-10
        assert np.allclose(out.fitted, sys.S @ b0, atol=1e-10)

    def test_zero_residual(self, rng):
        out = smooth(system(rng), 0.1, np.zeros(40))
        assert not np.any(out.b) and not np.any(out.c) and not np.any(out.fitted)

    def test_matches_influence_matrix(self, rng):
        sys = system(rng, 40, 2)
        A = influence_matrix(sys, 0.01)
        for _ in range(100):
            r = rng.normal(size=40)
            out = smooth(sys, 0.01, r)
            assert np.abs(out.fitted - A @ r).max() <= 1e-8
            assert np.abs(sys.S.T @ out.c).max() <= 1e-8
            assert np.abs(sys.S @ out.b + sys.Sigma @ out.c - out.fitted).max() <= 1e-8

    def test_shape_check(self, rng):
        with pytest.raises(ShapeError):
            smooth(system(rng), 0.1, np.zeros(3))

    @given(seed=st.integers(0, 2**32 - 1), m=st.integers(1, 3),
           loglam=st.floats(-10, 2))
    @settings(max_examples=40, deadline=None)
    def test_representer_identities(self, seed, m, loglam):
        rng = np.random.default_rng(seed)
        sys = system(rng, 25, m)
        r = rng.normal(size=25)
        out = smooth(sys, 10.0**loglam, r)
        assert np.abs(sys.S.T @ out.c).max() <= 1e-8 * max(1.0, np.abs(out.c).max())
        assert np.abs(evaluate_spline(sys, out.b, out.c, sys.t) - out.fitted).max() <= 1e-8


class TestEvaluate:
    def test_constant(self, rng):
        sys = system(rng)
        b = np.array([1.0, 0.0])
        vals = evaluate_spline(sys, b, np.zeros(sys.n), np.linspace(0, 1, 11))
        assert np.allclose(vals, 1.0)

    def test_scalar(self, rng):
        sys = system(rng)
        assert isinstance(evaluate_spline(sys, np.ones(2), np.zeros(sys.n), 0.3), float)

    def test_domain(self, rng):
        sys = system(rng)
        with pytest.raises(DomainError):
            evaluate_spline(sys, np.ones(2), np.zeros(sys.n), [0.5, 1.2])

    def test_interpolates_as_lambda_vanishes(self):
        t = np.linspace(0, 1, 50)
        sys = factorize(t, 2)
        y = np.sin(2 * np.pi * t)
        errs = []
        for lam in (1e-6, 1e-9, 1e-12):
            out = smooth(sys, lam, y)
            errs.append(np.abs(out.fitted - y).max())
        assert errs[0] > errs[1] > errs[2]
        assert errs[2] <= 1e-5
        # between knots the interpolant stays close to the smooth truth
        mid = 0.5 * (t[:-1] + t[1:])
        out = smooth(sys, 1e-12, y)
        assert np.abs(evaluate_spline(sys, out.b, out.c, mid) - np.sin(2 * np.pi * mid)).max() <= 1e-3
