import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from sparse_pspline.exceptions import DomainError, ShapeError, UnsupportedOrderError
from sparse_pspline.kernel import (MAX_ORDER, gram_matrix, kernel_matrix, nullspace_matrix,
                                   reproducing_kernel, scaled_bernoulli)

_x = sympy.Symbol("x")


def sympy_scaled_bernoulli(nu, t):
    poly = sympy.bernoulli(nu, _x) / sympy.factorial(nu)
    return float(poly.subs(_x, sympy.Rational(str(t))))


class TestScaledBernoulli:
    @pytest.mark.parametrize("nu, t, expected", [
        (0, 0.3, 1.0),
        (1, 0.5, 0.0),
        (2, 0.0, 1 / 12),
        (4, 0.0, -1 / 720),
    ])
    def test_examples(self, nu, t, expected):
        assert scaled_bernoulli(nu, t) == pytest.approx(expected, abs=1e-15)

    @pytest.mark.parametrize("nu", range(2 * MAX_ORDER + 1))
    def test_matches_sympy(self, nu):
        grid = np.linspace(0, 1, 41)
        ours = scaled_bernoulli(nu, grid)
        ref = np.array([sympy_scaled_bernoulli(nu, float(t)) for t in grid])
        assert np.allclose(ours, ref, rtol=1e-12, atol=1e-15)

    @pytest.mark.parametrize("nu", range(1, 2 * MAX_ORDER + 1))
    def test_zero_mean(self, nu):
        val, _ = integrate.quad(lambda s: scaled_bernoulli(nu, s), 0, 1, epsabs=1e-13)
        assert abs(val) <= 1e-9

    def test_scalar_in_scalar_out(self):
        assert isinstance(scaled_bernoulli(3, 0.25), float)

    @pytest.mark.parametrize("nu", [-1, 9, 2.5])
    def test_unsupported_degree(self, nu):
        with pytest.raises(UnsupportedOrderError):
            scaled_bernoulli(nu, 0.5)

    def test_domain(self):
        with pytest.raises(DomainError):
            scaled_bernoulli(2, 1.5)


class TestReproducingKernel:
    def test_diagonal_at_zero(self):
        assert reproducing_kernel(0.0, 0.0, 2) == pytest.approx((1 / 12) ** 2 + 1 / 720, abs=1e-15)

    @given(s=st.floats(0, 1), t=st.floats(0, 1), m=st.integers(1, MAX_ORDER))
    @settings(max_examples=200, deadline=None)
    def test_symmetry(self, s, t, m):
        assert abs(reproducing_kernel(s, t, m) - reproducing_kernel(t, s, m)) <= 1e-14

    def test_fractional_part_wraps(self):
        # [s - t] for s < t lands in [0, 1)
        a = reproducing_kernel(0.2, 0.7, 2)
        manual = (scaled_bernoulli(2, 0.2) * scaled_bernoulli(2, 0.7)
                  - scaled_bernoulli(4, 0.5))
        assert a == pytest.approx(manual, abs=1e-15)

    @pytest.mark.parametrize("m", [0, 5, 1.5])
    def test_bad_order(self, m):
        with pytest.raises(UnsupportedOrderError):
            reproducing_kernel(0.1, 0.2, m)

    def test_reproducing_property_via_quadrature(self):
        # <K(., s), K(., t)> in the penalized subspace equals K(s, t) for m = 1:
        # inner product is the integral of first derivatives (both have zero mean).
        s, t = 0.3, 0.8
        h = 1e-6

        def dk(u, v):
            return (reproducing_kernel(min(u + h, 1), v, 1)
                    - reproducing_kernel(max(u - h, 0), v, 1)) / (min(u + h, 1) - max(u - h, 0))

        val, _ = integrate.quad(lambda u: dk(u, s) * dk(u, t), 0, 1, points=[s, t], limit=200)
        assert val == pytest.approx(reproducing_kernel(s, t, 1), abs=1e-6)


class TestMatrices:
    def test_nullspace_example(self):
        S = nullspace_matrix([0.0, 0.5, 1.0], 2)
        assert np.allclose(S[:, 0], 1.0)
        assert np.allclose(S[:, 1], [-0.5, 0.0, 0.5])

    def test_nullspace_m1(self):
        S = nullspace_matrix(np.linspace(0, 1, 7), 1)
        assert S.shape == (7, 1) and np.all(S == 1.0)

    @pytest.mark.parametrize("m", [1, 2, 3, 4])
    def test_nullspace_rank(self, rng, m):
        t = np.sort(rng.uniform(size=12))
        assert np.linalg.matrix_rank(nullspace_matrix(t, m)) == m

    def test_gram_single_knot(self):
        G = gram_matrix([0.0], 2)
        assert G.shape == (1, 1)
        assert G[0, 0] == pytest.approx(0.0083333333333, abs=1e-12)

    @pytest.mark.parametrize("n", [20, 50, 200, 500])
    def test_gram_psd_and_symmetric(self, rng, n):
        t = np.sort(rng.uniform(size=n))
        G = gram_matrix(t, 2)
        assert np.array_equal(G, G.T)
        assert np.linalg.eigvalsh(G).min() >= -1e-10

    def test_kernel_matrix_matches_gram(self, rng):
        t = np.sort(rng.uniform(size=15))
        assert np.allclose(kernel_matrix(t, t, 3), gram_matrix(t, 3), atol=1e-15)

    @pytest.mark.parametrize("t, exc", [
        ([0.2, 0.1], DomainError),
        ([0.1, 0.1], DomainError),
        ([-0.1, 0.5], DomainError),
        ([[0.1, 0.2]], ShapeError),
    ])
    def test_grid_validation(self, t, exc):
        with pytest.raises(exc):
            gram_matrix(t, 2)
