"""Order-m Sobolev RKHS on [0, 1]: scaled Bernoulli polynomials and kernels."""

from math import factorial

import numpy as np

from .exceptions import DomainError, ShapeError, UnsupportedOrderError

MAX_ORDER = 4

# Bernoulli polynomial coefficients, highest power first.
_BERNOULLI = (
    (1.0,),
    (1.0, -1 / 2),
    (1.0, -1.0, 1 / 6),
    (1.0, -3 / 2, 1 / 2, 0.0),
    (1.0, -2.0, 1.0, 0.0, -1 / 30),
    (1.0, -5 / 2, 5 / 3, 0.0, -1 / 6, 0.0),
    (1.0, -3.0, 5 / 2, 0.0, -1 / 2, 0.0, 1 / 42),
    (1.0, -7 / 2, 7 / 2, 0.0, -7 / 6, 0.0, 1 / 6, 0.0),
    (1.0, -4.0, 14 / 3, 0.0, -7 / 3, 0.0, 2 / 3, 0.0, -1 / 30),
)

_SCALED = tuple(np.array(c) / factorial(nu) for nu, c in enumerate(_BERNOULLI))


def check_order(m):
    """Validate the smoothness order and return it as an int."""
    if int(m) != m or not 1 <= m <= MAX_ORDER:
        raise UnsupportedOrderError(
            f"spline order m must be an integer in [1, {MAX_ORDER}], got {m!r}")
    return int(m)


def _check_unit(t):
    t = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(t)) or np.any(t < 0.0) or np.any(t > 1.0):
        raise DomainError("spline covariate values must lie in [0, 1]")
    return t


def check_grid(t):
    """Validate a knot vector: 1-d, inside [0, 1], strictly increasing."""
    t = _check_unit(t)
    if t.ndim != 1:
        raise ShapeError("knot vector must be one-dimensional")
    if t.size > 1 and np.any(np.diff(t) <= 0):
        raise DomainError(
            "knots must be strictly increasing; sort the data and collapse ties first")
    return t


def scaled_bernoulli(nu, t):
    """Evaluate ``k_nu(t) = B_nu(t) / nu!``.

    Parameters
    ----------
    nu : int
        Polynomial degree, ``0 <= nu <= 2 * MAX_ORDER``.
    t : float or array-like
        Evaluation points in [0, 1].
    """
    if int(nu) != nu or not 0 <= nu < len(_SCALED):
        raise UnsupportedOrderError(
            f"scaled Bernoulli polynomial k_{nu} is not available "
            f"(supported degrees 0..{len(_SCALED) - 1})")
    t = _check_unit(t)
    out = np.polyval(_SCALED[int(nu)], t)
    return float(out) if out.ndim == 0 else out


def _frac(x):
    return x - np.floor(x)


def _kernel_values(s, t, m):
    # Caller guarantees domain; broadcasting over s and t.
    km_s = np.polyval(_SCALED[m], s)
    km_t = np.polyval(_SCALED[m], t)
    sign = -1.0 if m % 2 == 0 else 1.0  # (-1)^(m-1)
    return km_s * km_t + sign * np.polyval(_SCALED[2 * m], _frac(s - t))


def reproducing_kernel(s, t, m=2):
    """Reproducing kernel of the penalized subspace of ``W_m[0, 1]``.

    ``K(s, t) = k_m(s) k_m(t) + (-1)^(m-1) k_2m([s - t])`` where ``[.]`` is the
    fractional part. Accepts scalars or broadcastable arrays.
    """
    m = check_order(m)
    s = _check_unit(s)
    t = _check_unit(t)
    out = _kernel_values(s, t, m)
    return float(out) if np.ndim(out) == 0 else out


def nullspace_matrix(t, m=2):
    """The n x m matrix with entry ``(i, nu) = k_nu(t_i)``, ``nu < m``."""
    m = check_order(m)
    return nullspace_basis(check_grid(t), m)


def nullspace_basis(t, m=2):
    """Like :func:`nullspace_matrix` but for arbitrary (unsorted) points."""
    m = check_order(m)
    t = np.atleast_1d(_check_unit(t))
    return np.column_stack([np.polyval(_SCALED[nu], t) for nu in range(m)])


def gram_matrix(t, m=2):
    """Kernel Gram matrix ``Sigma_ij = K(t_i, t_j)``; symmetric by construction."""
    m = check_order(m)
    t = check_grid(t)
    G = _kernel_values(t[:, None], t[None, :], m)
    return 0.5 * (G + G.T)


def kernel_matrix(t_new, t, m=2):
    """Cross kernel matrix ``K(t_new_a, t_b)`` of shape (len(t_new), len(t))."""
    m = check_order(m)
    t_new = np.atleast_1d(_check_unit(t_new))
    t = _check_unit(t)
    return _kernel_values(t_new[:, None], t[None, :], m)
