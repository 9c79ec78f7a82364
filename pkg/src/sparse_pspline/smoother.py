"""Smoothing-spline influence matrix and representer coefficients.

Two numerically independent routes are provided:

* the direct route (:func:`influence_matrix`, :func:`smooth`) solves systems in
  ``F2' V F2`` with a Cholesky factorization, following the QR formulation;
* the spectral route (:meth:`SplineSystem.complement_weights` and friends)
  diagonalizes ``F2' Sigma F2`` once per knot grid so that traces, residual
  projections and square roots can be evaluated cheaply over a whole lambda grid.
"""

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import linalg

from .exceptions import (DegenerateKnotsError, DomainError, IllConditionedError,
                         InsufficientDataError, ShapeError)
from .kernel import (check_grid, check_order, gram_matrix, kernel_matrix, nullspace_basis,
                     nullspace_matrix)

EIG_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class SplineSystem:
    """Per-grid precomputation: ``S``, ``Sigma`` and the QR factors of ``S``."""

    t: np.ndarray
    m: int
    S: np.ndarray
    Sigma: np.ndarray
    F1: np.ndarray
    F2: np.ndarray
    U: np.ndarray

    @property
    def n(self):
        return self.t.shape[0]

    @cached_property
    def reduced_gram(self):
        """``F2' Sigma F2``, symmetrized."""
        Q = self.F2.T @ self.Sigma @ self.F2
        Q = 0.5 * (Q + Q.T)
        Q.setflags(write=False)
        return Q

    @cached_property
    def spectrum(self):
        """Eigen-decomposition ``F2' Sigma F2 = G diag(e) G'``.

        Returns ``(e, Z)`` with ``Z = F2 G``. Tiny negative eigenvalues from
        rounding are clamped to zero.
        """
        e, G = linalg.eigh(self.reduced_gram)
        scale = max(float(np.max(np.abs(e))), 1.0) if e.size else 1.0
        if e.size and e.min() < -EIG_TOL * scale:
            warnings.warn(f"kernel Gram matrix has eigenvalue {e.min():.3e} < 0; clamping",
                          RuntimeWarning, stacklevel=2)
        return np.clip(e, 0.0, None), self.F2 @ G

    def complement_weights(self, lambda1):
        """Eigenvalues of ``I - A(lambda1)`` on the columns of ``Z``."""
        lambda1 = _check_lambda(lambda1)
        e, _ = self.spectrum
        nl = self.n * lambda1
        return nl / (e + nl)

    def apply_complement(self, lambda1, v, power=1):
        """Compute ``(I - A)^power v`` for a vector or matrix ``v``."""
        _, Z = self.spectrum
        w = self.complement_weights(lambda1) ** power
        v = np.asarray(v, dtype=float)
        proj = Z.T @ v
        return Z @ (w[:, None] * proj if proj.ndim == 2 else w * proj)

    def complement_sqrt(self, lambda1):
        """Symmetric square root ``T`` with ``T' T = I - A(lambda1)``."""
        _, Z = self.spectrum
        r = np.sqrt(self.complement_weights(lambda1))
        T = (Z * r) @ Z.T
        return 0.5 * (T + T.T)


@dataclass(frozen=True)
class SmootherOutput:
    fitted: np.ndarray
    b: np.ndarray
    c: np.ndarray
    trace_A: float


def _check_lambda(lambda1):
    lambda1 = float(lambda1)
    if not np.isfinite(lambda1) or lambda1 <= 0:
        raise DomainError(f"smoothing parameter must be positive and finite, got {lambda1}")
    return lambda1


def factorize(t, m=2):
    """Build the :class:`SplineSystem` for knots ``t`` and order ``m``."""
    m = check_order(m)
    t = check_grid(t)
    n = t.shape[0]
    if n <= m:
        raise InsufficientDataError(f"need more than m={m} distinct knots, got {n}")
    S = nullspace_matrix(t, m)
    Sigma = gram_matrix(t, m)
    F, R = linalg.qr(S, mode="full")
    U = R[:m]
    d = np.abs(np.diag(U))
    if d.min() <= 1e-12 * max(d.max(), 1.0):
        raise DegenerateKnotsError("null-space matrix S is rank deficient")
    t = t.copy()
    for a in (t, S, Sigma, F, U):
        a.setflags(write=False)
    return SplineSystem(t=t, m=m, S=S, Sigma=Sigma, F1=F[:, :m], F2=F[:, m:], U=U)


def _inner_cholesky(sys, lambda1):
    nl = sys.n * lambda1
    G = sys.reduced_gram.copy()
    G[np.diag_indices_from(G)] += nl
    try:
        return linalg.cho_factor(G, lower=True)
    except linalg.LinAlgError as exc:
        raise IllConditionedError(f"F2' V F2 is not positive definite at lambda1={lambda1}") from exc


def influence_matrix(sys, lambda1):
    """Materialize ``A(lambda1) = I - n lambda1 F2 (F2' V F2)^-1 F2'``."""
    lambda1 = _check_lambda(lambda1)
    cho = _inner_cholesky(sys, lambda1)
    A = -sys.n * lambda1 * (sys.F2 @ linalg.cho_solve(cho, sys.F2.T))
    A[np.diag_indices_from(A)] += 1.0
    return 0.5 * (A + A.T)


def trace_influence(sys, lambda1):
    """Effective degrees of freedom ``tr A(lambda1)``; lies in ``[m, n]``."""
    return float(sys.n - np.sum(sys.complement_weights(lambda1)))


def smooth(sys, lambda1, r):
    """Smooth ``r`` against the knots: fitted values plus representer coefficients.

    ``c = F2 (F2' V F2)^-1 F2' r`` and ``b = U^-1 F1' (r - Sigma c)``, so that
    ``fitted = S b + Sigma c = A(lambda1) r``.
    """
    lambda1 = _check_lambda(lambda1)
    r = np.asarray(r, dtype=float)
    if r.shape != (sys.n,):
        raise ShapeError(f"residual vector must have shape ({sys.n},), got {r.shape}")
    cho = _inner_cholesky(sys, lambda1)
    c = sys.F2 @ linalg.cho_solve(cho, sys.F2.T @ r)
    Sc = sys.Sigma @ c
    b = linalg.solve_triangular(sys.U, sys.F1.T @ (r - Sc), lower=False)
    fitted = sys.S @ b + Sc
    return SmootherOutput(fitted=fitted, b=b, c=c, trace_A=trace_influence(sys, lambda1))


def evaluate_spline(sys, b, c, t_new):
    """Evaluate ``sum_nu b_nu k_nu(t) + sum_i c_i K(t, t_i)`` at ``t_new``."""
    scalar = np.ndim(t_new) == 0
    t_new = np.atleast_1d(np.asarray(t_new, dtype=float))
    if np.any(~np.isfinite(t_new)) or np.any(t_new < 0) or np.any(t_new > 1):
        raise DomainError("evaluation points must lie in [0, 1]")
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    if b.shape != (sys.m,) or c.shape != (sys.n,):
        raise ShapeError("coefficient shapes do not match the spline system")
    out = nullspace_basis(t_new, sys.m) @ b + kernel_matrix(t_new, sys.t, sys.m) @ c
    return float(out[0]) if scalar else out
