"""Partial spline with adaptive LASSO penalty.

The pipeline is:

1. fit the unpenalized partial spline at ``lambda1`` and build weights
   ``w_j = 1 / |beta_tilde_j|^gamma``;
2. solve the transformed weighted-LASSO problem along its path;
3. back-transform ``beta_j = beta*_j |beta_tilde_j|^gamma``;
4. smooth the partial residual ``y - X beta`` to obtain the spline part.

Coefficients are on the standardized covariate scale unless stated otherwise.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .exceptions import (CollinearDesignError, DomainError, IllConditionedError,
                         InsufficientDataError, ShapeError)
from .path import lars_path, transform_with_root
from .smoother import evaluate_spline, factorize, influence_matrix, smooth

PENALTIES = ("adaptive", "lasso", "none")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Sorted, tie-free data with standardization metadata.

    ``X`` holds the (standardized) linear covariates, rows ordered by ``t``.
    ``col_means``/``col_scales`` map back to the raw covariates via
    ``X_raw = X * col_scales + col_means``.
    """

    X: np.ndarray
    t: np.ndarray
    y: np.ndarray
    standardized: bool
    col_means: np.ndarray
    col_scales: np.ndarray
    order: np.ndarray = None
    multiplicity: np.ndarray = None
    names: tuple = field(default=())

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    def to_original_scale(self, beta):
        """Coefficients for raw covariates from standardized-scale ones."""
        return np.asarray(beta, dtype=float) / self.col_scales

    def to_standard_scale(self, beta):
        return np.asarray(beta, dtype=float) * self.col_scales

    def standardize_new(self, X_raw):
        X_raw = np.atleast_2d(np.asarray(X_raw, dtype=float))
        if X_raw.shape[1] != self.d:
            raise ShapeError(f"expected {self.d} linear covariates, got {X_raw.shape[1]}")
        return (X_raw - self.col_means) / self.col_scales


def collapse_ties(X, t, y):
    """Average rows sharing a ``t`` value.

    Returns ``(X, t, y, multiplicity)`` with strictly increasing ``t``.
    """
    t_u, inverse, counts = np.unique(t, return_inverse=True, return_counts=True)
    if t_u.size == t.size:
        order = np.argsort(t, kind="stable")
        return X[order], t[order], y[order], np.ones(t.size, dtype=int)
    Xs = np.zeros((t_u.size, X.shape[1]))
    np.add.at(Xs, inverse, X)
    ys = np.bincount(inverse, weights=y, minlength=t_u.size)
    return Xs / counts[:, None], t_u, ys / counts, counts


def make_dataset(X, t, y, standardize=True, ties="error", names=None):
    """Validate, sort by ``t`` and (optionally) standardize ``X``.

    Parameters
    ----------
    X : array of shape (n, d)
        Linear covariates; ``d`` may be zero.
    t : array of shape (n,)
        Spline covariate in [0, 1].
    y : array of shape (n,)
    standardize : bool
        Center each column and scale it to unit mean square.
    ties : {"error", "average"}
        How to treat repeated ``t`` values. ``"average"`` replaces each group
        of tied rows by its mean row.
    """
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1) if X.size else np.zeros((y.shape[0], 0))
    if y.ndim != 1 or t.shape != y.shape or X.shape[0] != y.shape[0]:
        raise ShapeError(f"inconsistent shapes: X {X.shape}, t {t.shape}, y {y.shape}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
        raise DomainError("data contain non-finite values")
    if np.any(t < 0) or np.any(t > 1):
        raise DomainError("spline covariate must lie in [0, 1]")
    order = np.argsort(t, kind="stable")
    X, t, y = X[order], t[order], y[order]
    multiplicity = np.ones(t.size, dtype=int)
    if np.any(np.diff(t) == 0):
        if ties == "error":
            raise DomainError("spline covariate has tied values; use ties='average'")
        if ties != "average":
            raise DomainError(f"unknown tie policy {ties!r}")
        X, t, y, multiplicity = collapse_ties(X, t, y)
    d = X.shape[1]
    if standardize and d:
        means = X.mean(axis=0)
        scales = np.sqrt(np.mean((X - means) ** 2, axis=0))
        if np.any(scales <= 0):
            raise CollinearDesignError(
                f"constant covariate column(s) {np.flatnonzero(scales <= 0).tolist()}")
        X = (X - means) / scales
    else:
        means, scales = np.zeros(d), np.ones(d)
    names = tuple(names) if names is not None else tuple(f"x{j + 1}" for j in range(d))
    return Dataset(X=X, t=t, y=y, standardized=bool(standardize and d), col_means=means,
                   col_scales=scales, order=order, multiplicity=multiplicity, names=names)


@dataclass(frozen=True, eq=False)
class PsFit:
    """Unpenalized partial spline fit."""

    beta_tilde: np.ndarray
    b: np.ndarray
    c: np.ndarray
    lambda1: float
    trace_A: float
    fitted: np.ndarray
    trace_hat: float
    rss: float


@dataclass(frozen=True, eq=False)
class PsaFit:
    """Double-penalized fit; ``beta_hat`` is on the standardized scale."""

    beta_hat: np.ndarray
    b: np.ndarray
    c: np.ndarray
    lambda1: float
    lambda2: float
    gamma: float
    weights: np.ndarray
    active_set: np.ndarray
    fitted: np.ndarray
    f_fitted: np.ndarray
    penalty: str = "adaptive"
    beta_tilde: np.ndarray = None
    path: object = None


def _system(dataset, m, sys):
    if sys is not None:
        if sys.n != dataset.n or not np.array_equal(sys.t, dataset.t):
            raise ShapeError("spline system was built for different knots")
        return sys
    return factorize(dataset.t, m)


def _solve_spd(M, rhs, what):
    try:
        cho = linalg.cho_factor(M, lower=True)
    except linalg.LinAlgError as exc:
        raise CollinearDesignError(f"{what} is singular") from exc
    d = np.diag(cho[0])
    if d.size and np.min(d) ** 2 <= 1e-12 * np.max(np.diag(M)):
        raise CollinearDesignError(f"{what} is numerically singular")
    return linalg.cho_solve(cho, rhs)


def partial_spline(dataset, lambda1, sys=None, m=2):
    """Unpenalized partial spline: ``beta = [X'(I-A)X]^-1 X'(I-A) y``."""
    sys = _system(dataset, m, sys)
    X, y, n, d = dataset.X, dataset.y, dataset.n, dataset.d
    if n <= d + sys.m:
        raise InsufficientDataError(f"need n > d + m; got n={n}, d={d}, m={sys.m}")
    if d:
        CX = sys.apply_complement(lambda1, X)
        XtCX = X.T @ CX
        beta = _solve_spd(XtCX, CX.T @ y, "X'(I - A)X")
        # trace of (I - A) X [X'(I-A)X]^-1 X'(I - A)
        extra = float(np.trace(_solve_spd(XtCX, CX.T @ CX, "X'(I - A)X")))
    else:
        beta, extra = np.zeros(0), 0.0
    sm = smooth(sys, lambda1, y - X @ beta)
    fitted = X @ beta + sm.fitted
    resid = y - fitted
    return PsFit(beta_tilde=beta, b=sm.b, c=sm.c, lambda1=float(lambda1), trace_A=sm.trace_A,
                 fitted=fitted, trace_hat=sm.trace_A + extra, rss=float(resid @ resid))


def adaptive_weights(beta_tilde, gamma=1.0):
    """Return ``(weights, scale)`` with ``w_j = 1/|beta_tilde_j|^gamma``.

    ``scale_j = |beta_tilde_j|^gamma``; a zero initial coefficient gives an
    infinite weight and zero scale, which removes the predictor.
    """
    if not gamma > 0:
        raise DomainError("gamma must be positive")
    scale = np.abs(np.asarray(beta_tilde, dtype=float)) ** gamma
    with np.errstate(divide="ignore"):
        weights = np.where(scale > 0, 1.0 / scale, np.inf)
    return weights, scale


def psa_fit(dataset, lambda1, lambda2, gamma=1.0, initial=None, sys=None, m=2,
            penalty="adaptive", lambda1_final=None, path=None):
    """Fit the double-penalized estimator at fixed tuning parameters.

    Parameters
    ----------
    dataset : Dataset
    lambda1 : float
        Roughness penalty used for the initial fit and the transformation.
    lambda2 : float
        Shrinkage penalty multiplying the weighted l1 norm (``>= 0``).
    gamma : float
        Adaptive weight exponent.
    initial : PsFit, optional
        Initial estimate; defaults to :func:`partial_spline` at ``lambda1``.
    penalty : {"adaptive", "lasso", "none"}
        ``"lasso"`` uses unit weights; ``"none"`` returns the partial spline.
    lambda1_final : float, optional
        Roughness penalty for the final smoothing step (defaults to ``lambda1``).
    path : LassoPath, optional
        Precomputed path for the same ``(dataset, lambda1, weights)``.
    """
    if penalty not in PENALTIES:
        raise DomainError(f"penalty must be one of {PENALTIES}")
    lambda2 = float(lambda2)
    if lambda2 < 0 or not np.isfinite(lambda2):
        raise DomainError("lambda2 must be finite and nonnegative")
    sys = _system(dataset, m, sys)
    if initial is None:
        initial = partial_spline(dataset, lambda1, sys)
    d = dataset.d
    if penalty == "adaptive":
        weights, scale = adaptive_weights(initial.beta_tilde, gamma)
    else:
        weights, scale = np.ones(d), np.ones(d)

    if penalty == "none" or d == 0:
        beta = initial.beta_tilde.copy()
        path = None
    else:
        if path is None:
            path = lasso_path_for(dataset, sys, lambda1, scale)
        beta = path.solve_original(lambda2)
    lam_f = lambda1 if lambda1_final is None else lambda1_final
    sm = smooth(sys, lam_f, dataset.y - dataset.X @ beta)
    fitted = dataset.X @ beta + sm.fitted
    return PsaFit(beta_hat=beta, b=sm.b, c=sm.c, lambda1=float(lambda1), lambda2=lambda2,
                  gamma=float(gamma), weights=weights, active_set=np.flatnonzero(beta != 0),
                  fitted=fitted, f_fitted=sm.fitted, penalty=penalty,
                  beta_tilde=initial.beta_tilde, path=path)


def lasso_path_for(dataset, sys, lambda1, scale):
    """Transformed weighted-LASSO path at ``lambda1`` for weight scales ``scale``."""
    T = sys.complement_sqrt(lambda1)
    return lars_path(transform_with_root(dataset.X, dataset.y, T, scale))


def predict(fit, sys, X_new, t_new):
    """``X_new beta + f(t_new)``; ``X_new`` must already be standardized."""
    X_new = np.atleast_2d(np.asarray(X_new, dtype=float))
    t_new = np.atleast_1d(np.asarray(t_new, dtype=float))
    if X_new.shape != (t_new.size, fit.beta_hat.size):
        raise ShapeError("X_new and t_new are inconsistent with the fit")
    return X_new @ fit.beta_hat + evaluate_spline(sys, fit.b, fit.c, t_new)


def lqa_penalty_diag(beta_ref, weights):
    """Diagonal of ``D``: ``w_j / |beta_ref_j|``, ``inf`` where the coordinate is held at 0."""
    beta_ref = np.asarray(beta_ref, dtype=float)
    weights = np.asarray(weights, dtype=float)
    out = np.full(beta_ref.shape, np.inf)
    ok = (beta_ref != 0) & np.isfinite(weights)
    out[ok] = weights[ok] / np.abs(beta_ref[ok])
    return out


def lqa_hat_matrix(dataset, lambda1, lambda2, beta_ref, beta_tilde, gamma=1.0, sys=None,
                   m=2, weights=None):
    """Local quadratic approximation of the fit as a linear smoother.

    ``H = [X'(I-A)X + n lambda2 D]^-1 X'(I-A)`` and ``M = X H + A (I - X H)``
    with ``D = diag(w_j / |beta_ref_j|)``; for ``gamma = 1`` this is
    ``1 / |beta_tilde_j beta_ref_j|``. Coordinates with ``beta_ref_j = 0`` (or
    infinite weight) are held at zero and get zero rows in ``H``.

    Returns ``(H, M)`` with shapes ``(d, n)`` and ``(n, n)``.
    """
    sys = _system(dataset, m, sys)
    X, n, d = dataset.X, dataset.n, dataset.d
    if weights is None:
        weights, _ = adaptive_weights(beta_tilde, gamma)
    D = lqa_penalty_diag(beta_ref, weights)
    keep = np.flatnonzero(np.isfinite(D))
    A = influence_matrix(sys, lambda1)
    C = np.eye(n) - A
    H = np.zeros((d, n))
    if keep.size:
        Xk = X[:, keep]
        XtC = Xk.T @ C
        inner = XtC @ Xk + n * lambda2 * np.diag(D[keep])
        try:
            H[keep] = linalg.solve(inner, XtC, assume_a="sym")
        except (linalg.LinAlgError, ValueError) as exc:
            raise IllConditionedError("LQA system is singular") from exc
    XH = X @ H
    M = XH + A @ (np.eye(n) - XH)
    return H, M


def spline_roughness(fit, sys):
    """``J_f^2 = c' Sigma c`` for the fitted spline (penalized part only)."""
    return float(fit.c @ sys.Sigma @ fit.c)


def leave_one_out_mspe(X, t, y, lambda1, lambda2, gamma=1.0, m=2, penalty="adaptive"):
    """Mean squared prediction error of leave-one-out refits at fixed penalties.

    Each fold re-standardizes the retained rows, refits, and predicts the
    held-out response on the raw covariate scale.
    """
    X = np.asarray(X, dtype=float)
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    errors = np.empty(n)
    for i in range(n):
        keep = np.arange(n) != i
        ds = make_dataset(X[keep], t[keep], y[keep])
        sys = factorize(ds.t, m)
        fit = psa_fit(ds, lambda1, lambda2, gamma, sys=sys, penalty=penalty)
        x_new = ds.standardize_new(X[i:i + 1]) if ds.d else np.zeros((1, 0))
        errors[i] = y[i] - predict(fit, sys, x_new, t[i:i + 1])[0]
    return float(np.mean(errors**2))
