"""scikit-learn front end for the double-penalized partial spline."""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import DomainError
from .psa import PENALTIES, make_dataset, partial_spline, psa_fit
from .smoother import evaluate_spline, factorize
from .tuning import MODES, TuningConfig, sigma2_hat, tune


def split_design(X, t_column):
    """Split ``X`` into linear covariates and the spline covariate column."""
    d_total = X.shape[1]
    if not -d_total <= t_column < d_total:
        raise DomainError(f"t_column {t_column} out of range for {d_total} columns")
    j = t_column % d_total
    return np.delete(X, j, axis=1), X[:, j]


def rescale_unit(t, low, high):
    if high <= low:
        raise DomainError("cannot rescale a constant spline covariate")
    return (t - low) / (high - low)


class PartialSplineRegressor(RegressorMixin, BaseEstimator):
    """Partial spline regression ``y = X beta + f(t) + eps`` with adaptive LASSO selection.

    The spline covariate is one column of the input matrix (``t_column``); the
    remaining columns are the linear covariates. They are standardized
    internally; ``coef_`` is reported on the input scale and
    ``coef_standardized_`` on the standardized scale.

    Parameters
    ----------
    penalty : {"adaptive", "lasso", "none"}, default="adaptive"
        Shrinkage on the linear part. ``"none"`` fits the unpenalized partial spline.
    lambda1 : float, optional
        Roughness penalty. Selected by GCV when omitted.
    lambda2 : float, optional
        Shrinkage penalty. Selected by BIC along the LASSO path when omitted.
    gamma : float, default=1.0
        Adaptive weight exponent.
    m : int, default=2
        Spline order (1 to 4).
    tuning : {"two-stage", "joint-gcv"}, default="two-stage"
    lambda1_grid, lambda2_grid : array-like, optional
        Tuning grids; ``lambda2_grid=None`` uses every path breakpoint.
    t_column : int, default=-1
        Column of ``X`` holding the spline covariate.
    rescale_t : bool, default=False
        Min-max rescale the spline covariate to [0, 1] using the training range.
    ties : {"average", "error"}, default="average"
        Handling of repeated spline-covariate values.

    Attributes
    ----------
    coef_ : ndarray of shape (n_linear,)
    coef_standardized_ : ndarray of shape (n_linear,)
    active_set_ : ndarray of int
    lambda1_, lambda2_, sigma2_ : float
    fit_ : PsaFit
    tuning_ : TunedFit or None
    """

    def __init__(self, penalty="adaptive", lambda1=None, lambda2=None, gamma=1.0, m=2,
                 tuning="two-stage", lambda1_grid=None, lambda2_grid=None, t_column=-1,
                 rescale_t=False, ties="average"):
        self.penalty = penalty
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.gamma = gamma
        self.m = m
        self.tuning = tuning
        self.lambda1_grid = lambda1_grid
        self.lambda2_grid = lambda2_grid
        self.t_column = t_column
        self.rescale_t = rescale_t
        self.ties = ties

    def _config(self):
        kw = dict(gamma=self.gamma, mode=self.tuning, m=self.m)
        if self.lambda1_grid is not None:
            kw["lambda1_grid"] = self.lambda1_grid
        if self.lambda2_grid is not None:
            kw["lambda2_grid"] = self.lambda2_grid
        return TuningConfig(**kw)

    def _spline_covariate(self, t, fitting):
        if self.rescale_t:
            if fitting:
                self.t_range_ = (float(t.min()), float(t.max()))
            t = rescale_unit(t, *self.t_range_)
        if np.any(t < 0) or np.any(t > 1):
            raise DomainError("spline covariate outside [0, 1]; set rescale_t=True to rescale")
        return t

    def fit(self, X, y):
        """Fit the model; ``X`` includes the spline covariate column."""
        if self.penalty not in PENALTIES:
            raise DomainError(f"penalty must be one of {PENALTIES}")
        if self.tuning not in MODES:
            raise DomainError(f"tuning must be one of {MODES}")
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        self.n_features_in_ = X.shape[1]
        Xl, t = split_design(X, self.t_column)
        t = self._spline_covariate(t, fitting=True)
        ds = make_dataset(Xl, t, y, standardize=True, ties=self.ties)
        sys = factorize(ds.t, self.m)
        config = self._config()

        self.tuning_ = None
        if self.lambda1 is None or (self.lambda2 is None and self.penalty != "none"):
            if self.lambda1 is not None:
                config = TuningConfig(lambda1_grid=[self.lambda1], lambda2_grid=config.lambda2_grid,
                                      gamma=self.gamma, mode=self.tuning, m=self.m)
            tuned = tune(ds, config, penalty=self.penalty, sys=sys)
            lam1 = tuned.lambda1_star
            lam2 = tuned.lambda2_star if self.lambda2 is None else float(self.lambda2)
            fit = tuned.fit if self.lambda2 is None else psa_fit(
                ds, lam1, lam2, self.gamma, sys=sys, penalty=self.penalty)
            self.tuning_ = tuned
            s2 = tuned.sigma2_hat
        else:
            lam1 = float(self.lambda1)
            lam2 = 0.0 if self.penalty == "none" else float(self.lambda2)
            initial = partial_spline(ds, lam1, sys)
            fit = psa_fit(ds, lam1, lam2, self.gamma, initial=initial, sys=sys,
                          penalty=self.penalty)
            s2 = sigma2_hat(ds, lam1, sys)

        self.dataset_ = ds
        self.system_ = sys
        self.fit_ = fit
        self.lambda1_ = float(lam1)
        self.lambda2_ = float(lam2)
        self.sigma2_ = float(s2)
        self.coef_standardized_ = fit.beta_hat.copy()
        self.coef_ = ds.to_original_scale(fit.beta_hat)
        self.active_set_ = fit.active_set.copy()
        self.intercept_shift_ = float(ds.col_means @ self.coef_)
        return self

    def spline(self, t):
        """Fitted smooth component ``f_hat(t)`` on the input scale of ``X``."""
        check_is_fitted(self, "fit_")
        t = self._spline_covariate(np.atleast_1d(np.asarray(t, dtype=float)), fitting=False)
        return evaluate_spline(self.system_, self.fit_.b, self.fit_.c, t) - self.intercept_shift_

    def predict(self, X):
        check_is_fitted(self, "fit_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise DomainError(f"expected {self.n_features_in_} columns, got {X.shape[1]}")
        Xl, t = split_design(X, self.t_column)
        return Xl @ self.coef_ + self.spline(t)
