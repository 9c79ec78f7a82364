"""Tuning-parameter selection: GCV over lambda1, BIC over lambda2, joint GCV.

All criteria are evaluated in the eigenbasis of ``I - A(lambda1)``. With
``Z`` its eigenvectors and ``w`` the eigenvalues, ``(I - A) v = Z diag(w) Z' v``,
so after projecting ``X`` and ``y`` once per knot grid every lambda costs
``O(n d^2)``.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .exceptions import CollinearDesignError, DomainError, InsufficientDFError
from .psa import PENALTIES, adaptive_weights, lasso_path_for, partial_spline, psa_fit
from .smoother import factorize

DEFAULT_LAMBDA1_GRID = np.logspace(-8, 1, 40)
DEFAULT_LAMBDA2_GRID = np.concatenate([[0.0], np.logspace(-5, 2, 36)])
MODES = ("two-stage", "joint-gcv")


def _check_grid(grid, name, allow_zero=False):
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.ndim != 1 or grid.size == 0:
        raise DomainError(f"{name} must be a nonempty 1-d grid")
    low_ok = np.all(grid >= 0) if allow_zero else np.all(grid > 0)
    if not (np.all(np.isfinite(grid)) and low_ok):
        raise DomainError(f"{name} must be finite and {'nonnegative' if allow_zero else 'positive'}")
    if np.any(np.diff(grid) <= 0):
        raise DomainError(f"{name} must be strictly increasing")
    return grid


@dataclass(frozen=True)
class TuningConfig:
    """Grids and mode for :func:`tune`.

    ``lambda2_grid`` is either ``"path-breakpoints"`` (every breakpoint of the
    LASSO path plus segment midpoints) or an explicit increasing grid.
    """

    lambda1_grid: np.ndarray = field(default_factory=lambda: DEFAULT_LAMBDA1_GRID.copy())
    lambda2_grid: object = "path-breakpoints"
    gamma: float = 1.0
    mode: str = "two-stage"
    m: int = 2

    def __post_init__(self):
        object.__setattr__(self, "lambda1_grid", _check_grid(self.lambda1_grid, "lambda1_grid"))
        if isinstance(self.lambda2_grid, str):
            if self.lambda2_grid != "path-breakpoints":
                raise DomainError("lambda2_grid must be 'path-breakpoints' or a numeric grid")
        else:
            object.__setattr__(self, "lambda2_grid",
                               _check_grid(self.lambda2_grid, "lambda2_grid", allow_zero=True))
        if not self.gamma > 0:
            raise DomainError("gamma must be positive")
        if self.mode not in MODES:
            raise DomainError(f"mode must be one of {MODES}")


@dataclass(frozen=True, eq=False)
class TunedFit:
    fit: object
    lambda1_star: float
    lambda2_star: float
    sigma2_hat: float
    gcv_curve: np.ndarray
    bic_curve: np.ndarray
    surface: np.ndarray = None


class _Projected:
    """``X`` and ``y`` in the eigenbasis of ``I - A``, shared across lambdas."""

    def __init__(self, dataset, sys):
        e, Z = sys.spectrum
        self.e = e
        self.n = dataset.n
        self.d = dataset.d
        self.PX = Z.T @ dataset.X
        self.py = Z.T @ dataset.y

    def weights(self, lambda1):
        nl = self.n * lambda1
        return nl / (self.e + nl)

    def partial_spline(self, lambda1):
        """``(beta_tilde, rss, tr A, tr A_tilde)`` of the partial spline."""
        w = self.weights(lambda1)
        trA = self.n - float(np.sum(w))
        if self.d:
            G = self.PX.T @ (w[:, None] * self.PX)
            try:
                cho = linalg.cho_factor(G, lower=True)
            except linalg.LinAlgError as exc:
                raise CollinearDesignError("X'(I - A)X is singular") from exc
            beta = linalg.cho_solve(cho, self.PX.T @ (w * self.py))
            extra = float(np.trace(linalg.cho_solve(cho, self.PX.T @ (w[:, None] ** 2 * self.PX))))
        else:
            beta, extra = np.zeros(0), 0.0
        return beta, self.rss(w, beta), trA, trA + extra

    def rss(self, w, beta):
        r = w * (self.py - self.PX @ beta)
        return float(r @ r)


def _argmin_smallest(values):
    # np.nanargmin returns the first minimizer; grids are increasing.
    return int(np.nanargmin(values))


def gcv_score(rss, trace, n):
    return (rss / n) / (1.0 - trace / n) ** 2


def gcv_lambda1(dataset, grid=None, sys=None, m=2):
    """Select ``lambda1`` by GCV of the unpenalized partial spline.

    Returns ``(lambda1_star, curve)`` where ``curve`` is an array of
    ``(lambda1, score)`` rows; skipped points carry ``nan``.
    """
    grid = _check_grid(DEFAULT_LAMBDA1_GRID if grid is None else grid, "lambda1 grid")
    sys = factorize(dataset.t, m) if sys is None else sys
    proj = _Projected(dataset, sys)
    n = dataset.n
    scores = np.full(grid.size, np.nan)
    for k, lam in enumerate(grid):
        _, rss, _, tr_tilde = proj.partial_spline(lam)
        if tr_tilde >= n - 1e-10:
            warnings.warn(f"GCV undefined at lambda1={lam:.3g} (trace {tr_tilde:.6g} >= n); skipped",
                          RuntimeWarning, stacklevel=2)
            continue
        scores[k] = gcv_score(rss, tr_tilde, n)
    if np.all(np.isnan(scores)):
        raise InsufficientDFError("GCV is undefined at every lambda1 grid point")
    return float(grid[_argmin_smallest(scores)]), np.column_stack([grid, scores])


def sigma2_hat(dataset, lambda1, sys=None, m=2):
    """Residual variance of the partial spline, with ``n - tr A - d`` degrees of freedom."""
    sys = factorize(dataset.t, m) if sys is None else sys
    _, rss, trA, _ = _Projected(dataset, sys).partial_spline(lambda1)
    dof = dataset.n - trA - dataset.d
    if dof <= 0:
        raise InsufficientDFError(f"residual degrees of freedom {dof:.3g} <= 0")
    return rss / dof


def bic_score(rss, sigma2, n, size):
    return rss / sigma2 + np.log(n) * size


def bic_lambda2(dataset, lambda1_star, path, sigma2, sys=None, m=2, candidates=None):
    """Select ``lambda2`` by BIC along ``path``.

    For each candidate the residual is ``(I - A)(y - X beta_hat)``, which is
    exactly ``y - X beta_hat - f_hat`` with ``f_hat`` the final-step smoother.
    Returns ``(lambda2_star, curve)`` with curve rows ``(lambda2, score)``
    sorted by increasing ``lambda2``.
    """
    if not sigma2 > 0:
        raise DomainError("sigma2 must be positive")
    sys = factorize(dataset.t, m) if sys is None else sys
    proj = _Projected(dataset, sys)
    w = proj.weights(lambda1_star)
    cand = path.candidates() if candidates is None else np.asarray(candidates, dtype=float)
    cand = np.unique(cand)
    scores = np.empty(cand.size)
    for k, lam2 in enumerate(cand):
        beta = path.solve_original(lam2)
        scores[k] = bic_score(proj.rss(w, beta), sigma2, dataset.n, np.count_nonzero(beta))
    return float(cand[_argmin_smallest(scores)]), np.column_stack([cand, scores])


def lqa_trace(proj, lambda1, lambda2, beta, weights):
    """``tr M(lambda1, lambda2)`` of the LQA smoother, via the eigenbasis."""
    w = proj.weights(lambda1)
    trA = proj.n - float(np.sum(w))
    keep = np.flatnonzero((beta != 0) & np.isfinite(weights))
    if keep.size == 0:
        return trA
    PX = proj.PX[:, keep]
    inner = PX.T @ (w[:, None] * PX) + proj.n * lambda2 * np.diag(weights[keep] / np.abs(beta[keep]))
    rhs = PX.T @ (w[:, None] ** 2 * PX)
    return trA + float(np.trace(linalg.solve(inner, rhs, assume_a="sym")))


def joint_gcv(dataset, grid1=None, grid2=None, gamma=1.0, penalty="adaptive", sys=None, m=2):
    """GCV over the ``(lambda1, lambda2)`` product grid using the LQA trace.

    Returns ``(lambda1_star, lambda2_star, surface)``; ``surface[i, j]`` is the
    score at ``(grid1[i], grid2[j])`` and ``nan`` where undefined. Ties are
    broken toward smaller ``lambda1`` and then smaller ``lambda2``.
    """
    grid1 = _check_grid(DEFAULT_LAMBDA1_GRID if grid1 is None else grid1, "lambda1 grid")
    grid2 = _check_grid(DEFAULT_LAMBDA2_GRID if grid2 is None else grid2, "lambda2 grid",
                        allow_zero=True)
    if penalty not in ("adaptive", "lasso"):
        raise DomainError("joint GCV needs a penalized method")
    sys = factorize(dataset.t, m) if sys is None else sys
    proj = _Projected(dataset, sys)
    n = dataset.n
    surface = np.full((grid1.size, grid2.size), np.nan)
    skipped = 0
    for i, lam1 in enumerate(grid1):
        beta_tilde = proj.partial_spline(lam1)[0]
        if penalty == "adaptive":
            weights, scale = adaptive_weights(beta_tilde, gamma)
        else:
            weights, scale = np.ones(dataset.d), np.ones(dataset.d)
        path = lasso_path_for(dataset, sys, lam1, scale) if dataset.d else None
        w = proj.weights(lam1)
        for j, lam2 in enumerate(grid2):
            beta = path.solve_original(lam2) if path is not None else np.zeros(0)
            tr = lqa_trace(proj, lam1, lam2, beta, weights)
            if tr >= n - 1e-10:
                skipped += 1
                continue
            surface[i, j] = gcv_score(proj.rss(w, beta), tr, n)
    if skipped:
        warnings.warn(f"joint GCV undefined at {skipped} grid point(s); skipped",
                      RuntimeWarning, stacklevel=2)
    if np.all(np.isnan(surface)):
        raise InsufficientDFError("joint GCV is undefined on the whole grid")
    i, j = np.unravel_index(_argmin_smallest(surface.ravel()), surface.shape)
    return float(grid1[i]), float(grid2[j]), surface


def tune(dataset, config=None, penalty="adaptive", sys=None):
    """Select tuning parameters and return the final :class:`TunedFit`.

    ``penalty="none"`` (the unpenalized partial spline) only tunes ``lambda1``.
    """
    config = TuningConfig() if config is None else config
    if penalty not in PENALTIES:
        raise DomainError(f"penalty must be one of {PENALTIES}")
    sys = factorize(dataset.t, config.m) if sys is None else sys
    lam1, gcv_curve = gcv_lambda1(dataset, config.lambda1_grid, sys)
    surface = None
    if config.mode == "joint-gcv" and penalty != "none":
        grid2 = None if isinstance(config.lambda2_grid, str) else config.lambda2_grid
        lam1, lam2, surface = joint_gcv(dataset, config.lambda1_grid, grid2, config.gamma,
                                        penalty, sys)
    initial = partial_spline(dataset, lam1, sys)
    s2 = sigma2_hat(dataset, lam1, sys)
    if penalty == "none":
        fit = psa_fit(dataset, lam1, 0.0, config.gamma, initial=initial, sys=sys, penalty="none")
        return TunedFit(fit=fit, lambda1_star=lam1, lambda2_star=0.0, sigma2_hat=s2,
                        gcv_curve=gcv_curve, bic_curve=np.empty((0, 2)))
    fit0 = psa_fit(dataset, lam1, 0.0, config.gamma, initial=initial, sys=sys, penalty=penalty)
    bic_curve = np.empty((0, 2))
    if config.mode == "two-stage":
        if fit0.path is None:
            lam2 = 0.0
        else:
            cands = None if isinstance(config.lambda2_grid, str) else config.lambda2_grid
            lam2, bic_curve = bic_lambda2(dataset, lam1, fit0.path, s2, sys, candidates=cands)
    fit = psa_fit(dataset, lam1, lam2, config.gamma, initial=initial, sys=sys, penalty=penalty,
                  path=fit0.path)
    return TunedFit(fit=fit, lambda1_star=lam1, lambda2_star=lam2, sigma2_hat=s2,
                    gcv_curve=gcv_curve, bic_curve=bic_curve, surface=surface)
