"""Weighted-LASSO reformulation and its solution path.

The profiled objective for the linear coefficients is turned into a plain LASSO
problem by the symmetric square root ``T`` of ``I - A(lambda1)``::

    min (1/n) ||y* - X* b*||^2 + lambda2 * sum_j |b*_j|

with ``y* = T y`` and ``X* = T X W``. The penalty keeps the explicit ``1/n``
factor, so the entry threshold is ``lambda2_max = max_j (2/n) |x*_j' y*|``.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import linalg

from .exceptions import (DegenerateDirectionError, DomainError, IterationsExceededError,
                         NotPSDError, ShapeError)

PSD_CLAMP = 1e-8
PSD_REJECT = 1e-6


def psd_sqrt(M):
    """Symmetric PSD square root via eigen-decomposition.

    Eigenvalues in ``[-1e-6, 0)`` (relative to the spectral radius, floor 1)
    are clamped to zero; anything more negative raises :class:`NotPSDError`.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ShapeError("psd_sqrt expects a square matrix")
    M = 0.5 * (M + M.T)
    vals, vecs = linalg.eigh(M)
    scale = max(float(np.max(np.abs(vals))), 1.0) if vals.size else 1.0
    if vals.size and vals.min() < -PSD_REJECT * scale:
        raise NotPSDError(f"matrix has eigenvalue {vals.min():.3e}; not positive semidefinite")
    root = np.sqrt(np.clip(vals, 0.0, None))
    T = (vecs * root) @ vecs.T
    return 0.5 * (T + T.T)


@dataclass(frozen=True, eq=False)
class TransformedProblem:
    """LASSO instance in the transformed coordinates.

    ``active_map[k]`` is the original column index of ``X_star[:, k]``;
    columns whose weight scale is zero are not represented.
    """

    y_star: np.ndarray
    X_star: np.ndarray
    active_map: np.ndarray
    scale: np.ndarray
    n_features: int

    @property
    def n(self):
        return self.y_star.shape[0]

    @cached_property
    def gram(self):
        return self.X_star.T @ self.X_star

    @cached_property
    def xty(self):
        return self.X_star.T @ self.y_star

    @property
    def lambda_max(self):
        if self.xty.size == 0:
            return 0.0
        return float(2.0 / self.n * np.max(np.abs(self.xty)))

    def objective(self, beta_star, lambda2):
        r = self.y_star - self.X_star @ beta_star
        return float(r @ r / self.n + lambda2 * np.sum(np.abs(beta_star)))

    def to_original(self, beta_star):
        """Back-transform ``b_j = b*_j |beta_tilde_j|^gamma`` to a full-length vector."""
        beta = np.zeros(self.n_features)
        beta[self.active_map] = np.asarray(beta_star) * self.scale[self.active_map]
        return beta


def transform_with_root(X, y, T, weights_scale):
    """Build the LASSO instance from a precomputed square root ``T``."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    scale = np.asarray(weights_scale, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],) or scale.shape != (X.shape[1],):
        raise ShapeError("inconsistent shapes for X, y and weight scales")
    if T.shape != (X.shape[0], X.shape[0]):
        raise ShapeError("square-root matrix does not match the sample size")
    if np.any(scale < 0) or np.any(~np.isfinite(scale)):
        raise DomainError("weight scales must be finite and nonnegative")
    active = np.flatnonzero(scale > 0)
    X_star = T @ (X[:, active] * scale[active])
    return TransformedProblem(y_star=T @ y, X_star=X_star, active_map=active,
                              scale=scale, n_features=X.shape[1])


def transform(X, y, A, weights_scale):
    """Transform the profiled problem using influence matrix ``A``.

    ``weights_scale[j] = |beta_tilde_j|^gamma``; zero entries drop column ``j``
    so its coefficient stays exactly zero (the 0/0 = 0 convention).
    """
    A = np.asarray(A, dtype=float)
    T = psd_sqrt(np.eye(A.shape[0]) - A)
    return transform_with_root(X, y, T, weights_scale)


@dataclass(frozen=True, eq=False)
class LassoPath:
    """Piecewise-linear LASSO path; coefficients are in transformed coordinates.

    ``coefs[k]`` is the solution at ``breakpoints[k]`` (strictly decreasing,
    ending at 0). ``active_sets[k]`` and ``signs[k]`` describe the open segment
    between ``breakpoints[k]`` and ``breakpoints[k + 1]``.
    """

    breakpoints: np.ndarray
    coefs: np.ndarray
    active_sets: tuple
    signs: tuple
    problem: TransformedProblem

    def solve_at(self, lambda2):
        """Exact path solution at ``lambda2`` by linear interpolation."""
        lambda2 = float(lambda2)
        if lambda2 < 0:
            raise DomainError("lambda2 must be nonnegative")
        lam = self.breakpoints
        if lambda2 >= lam[0]:
            return np.zeros(self.coefs.shape[1])
        if lambda2 <= lam[-1]:
            return self.coefs[-1].copy()
        # lam is strictly decreasing
        k = int(np.searchsorted(-lam, -lambda2, side="right")) - 1
        if lam[k] == lambda2:
            return self.coefs[k].copy()
        w = (lam[k] - lambda2) / (lam[k] - lam[k + 1])
        # coordinates zero at both ends stay exactly zero
        return (1.0 - w) * self.coefs[k] + w * self.coefs[k + 1]

    def solve_original(self, lambda2):
        return self.problem.to_original(self.solve_at(lambda2))

    def candidates(self):
        """Breakpoints together with segment midpoints, in decreasing order."""
        lam = self.breakpoints
        mids = 0.5 * (lam[:-1] + lam[1:])
        out = np.empty(lam.size + mids.size)
        out[0::2] = lam
        out[1::2] = mids
        return out


def _factor(G, A):
    GA = G[np.ix_(A, A)]
    cho = linalg.cho_factor(GA, lower=True)
    if np.min(np.diag(cho[0])) ** 2 <= 1e-12 * np.max(np.diag(GA)):
        raise linalg.LinAlgError("near-singular active Gram matrix")
    return cho


def lars_path(tp, max_steps=None, tol=1e-12):
    """LASSO-modified LARS homotopy for the transformed problem.

    On a segment with active set ``A`` and signs ``s`` the solution is
    ``b_A(lam) = u - (n/2) lam w`` with ``G_AA u = X_A' y`` and ``G_AA w = s``,
    and inactive correlations are ``c_j(lam) = e_j + lam a_j``. Each segment
    ends at the largest ``lam`` where an active coefficient hits zero (it
    leaves) or an inactive correlation reaches ``+-lam`` from inside (it
    enters). Everything is recomputed from the normal equations of the
    current active set, so errors do not accumulate along the path.

    Ties enter lowest index first, one per (zero-length) step; zero-length
    segments are removed from the result.
    """
    n = tp.n
    p = tp.X_star.shape[1]
    G = tp.gram
    xty = tp.xty
    half_n = 0.5 * n
    corr0 = xty / half_n
    # same rounding as tp.lambda_max so the all-zero threshold agrees exactly
    lam = tp.lambda_max
    if lam <= 0:
        return LassoPath(breakpoints=np.array([0.0]), coefs=np.zeros((1, p)),
                         active_sets=(), signs=(), problem=tp)
    max_steps = max_steps or 8 * p + 50
    eps = tol * lam
    rank = None

    sign = np.zeros(p)
    j0 = int(np.flatnonzero(np.abs(corr0) >= lam - eps)[0])
    active = [j0]
    sign[j0] = np.sign(corr0[j0])
    lams, coefs, seg_active, seg_signs = [lam], [np.zeros(p)], [], []
    blocked = {j0}

    for _ in range(max_steps):
        A = np.array(sorted(active))
        s = sign[A]
        try:
            cho = _factor(G, A)
        except linalg.LinAlgError as exc:
            raise DegenerateDirectionError(
                "active columns are collinear; equiangular direction undefined",
                indices=tp.active_map[A]) from exc
        u = linalg.cho_solve(cho, xty[A])
        w = linalg.cho_solve(cho, s)

        # leaving: u_j - (n/2) lam w_j = 0
        lam_out, j_out = -np.inf, -1
        with np.errstate(divide="ignore", invalid="ignore"):
            lz = u / (half_n * w)
        for k, lk in enumerate(lz):
            if A[k] in blocked:
                continue  # entered at this breakpoint; starts at zero
            if np.isfinite(lk) and lk < lam - eps and lk > lam_out:
                lam_out, j_out = lk, int(A[k])

        # entering: e_j + lam a_j = +-lam, crossing from inside
        GA = G[:, A]
        a = GA @ w
        e = (xty - GA @ u) / half_n
        inactive = np.ones(p, dtype=bool)
        inactive[A] = False
        # an inactive column whose correlation tracks +-lam identically is
        # collinear with the active set (e.g. a duplicated predictor)
        tied = inactive & (np.minimum(np.abs(1.0 - a), np.abs(1.0 + a)) <= 1e-9) \
            & (np.abs(e) <= 1e-9 * lams[0])
        if tied.any():
            j = int(np.flatnonzero(tied)[0])
            raise DegenerateDirectionError(
                "column moves in lockstep with the active set; path is not unique",
                indices=tp.active_map[np.append(A, j)])
        rejected = set()
        while True:
            lam_in, j_in, s_in = -np.inf, -1, 0.0
            for j in np.flatnonzero(inactive):
                ceiling = lam - eps if j in blocked else lam + eps
                for sj, den in ((1.0, 1.0 - a[j]), (-1.0, 1.0 + a[j])):
                    if den <= 0 or (j, sj) in rejected:
                        continue
                    lj = sj * e[j] / den
                    if lj <= ceiling and lj > lam_in + eps:
                        lam_in, j_in, s_in = min(lj, lam), int(j), sj
            if j_in < 0 or lam_in <= max(lam_out, 0.0):
                break
            A2 = np.array(sorted(active + [j_in]))
            try:
                w2 = linalg.cho_solve(_factor(G, A2), np.where(A2 == j_in, s_in, sign[A2]))
            except linalg.LinAlgError as exc:
                if rank is None:
                    rank = np.linalg.matrix_rank(tp.X_star)
                if A2.size <= rank:
                    raise DegenerateDirectionError(
                        "entering column is collinear with the active set",
                        indices=tp.active_map[A2]) from exc
                rejected.add((j_in, s_in))  # active set already saturated
                continue
            if np.sign(w2[np.searchsorted(A2, j_in)]) != s_in:
                rejected.add((j_in, s_in))
                continue
            break

        if max(lam_in, lam_out) <= 0:
            event, new_lam = "end", 0.0
        elif lam_out >= lam_in:
            event, new_lam = "drop", lam_out
        else:
            event, new_lam = "enter", lam_in

        beta = np.zeros(p)
        beta[A] = u - half_n * new_lam * w
        seg_active.append(tuple(int(i) for i in A))
        seg_signs.append(tuple(float(v) for v in s))
        if event == "drop":
            beta[j_out] = 0.0
            active.remove(j_out)
            sign[j_out] = 0.0
            blocked = {j_out}
        elif event == "enter":
            active.append(j_in)
            sign[j_in] = s_in
            blocked = {j_in}
        lam = new_lam
        lams.append(lam)
        coefs.append(beta)
        if event == "end":
            break
        if not active:
            corr = (xty - G @ beta) / half_n
            j = int(np.argmax(np.abs(corr)))
            active = [j]
            sign[j] = np.sign(corr[j]) or 1.0
            blocked = {j}
    else:
        raise IterationsExceededError("LARS did not reach lambda2 = 0", sweeps=max_steps)

    lams = np.array(lams)
    # drop zero-length segments (tie entries); keep the later breakpoint
    keep_seg = lams[:-1] - lams[1:] > eps
    keep_bp = np.concatenate([keep_seg, [True]])
    return LassoPath(breakpoints=lams[keep_bp], coefs=np.array(coefs)[keep_bp],
                     active_sets=tuple(a for a, k in zip(seg_active, keep_seg) if k),
                     signs=tuple(g for g, k in zip(seg_signs, keep_seg) if k), problem=tp)


def soft_threshold(z, gamma):
    return np.sign(z) * np.maximum(np.abs(z) - gamma, 0.0)


def cd_solve(tp, lambda2, tol=1e-10, max_sweeps=100_000):
    """Cyclic coordinate descent on the transformed LASSO objective.

    Independent of :func:`lars_path`; used as a verification oracle.
    Converges when the largest coordinate change in a sweep is below ``tol``.
    """
    lambda2 = float(lambda2)
    if lambda2 < 0:
        raise DomainError("lambda2 must be nonnegative")
    n = tp.n
    X = tp.X_star
    p = X.shape[1]
    beta = np.zeros(p)
    if p == 0 or lambda2 >= tp.lambda_max:
        return beta
    col_sq = np.einsum("ij,ij->j", X, X)
    r = tp.y_star.copy()
    thresh = 0.5 * n * lambda2
    max_change = np.inf
    for sweep in range(1, max_sweeps + 1):
        max_change = 0.0
        for j in range(p):
            if col_sq[j] == 0:
                continue
            old = beta[j]
            z = X[:, j] @ r + col_sq[j] * old
            new = soft_threshold(z, thresh) / col_sq[j]
            if new != old:
                r -= X[:, j] * (new - old)
                beta[j] = new
                max_change = max(max_change, abs(new - old))
        if max_change < tol:
            return beta
    raise IterationsExceededError(
        f"coordinate descent did not converge in {max_sweeps} sweeps "
        f"(last max change {max_change:.3e}, KKT residual {kkt_residual(tp, beta, lambda2):.3e})",
        max_change=max_change, sweeps=max_sweeps)


def kkt_residual(tp, beta_star, lambda2):
    """Largest violation of the LASSO subgradient conditions."""
    beta_star = np.asarray(beta_star, dtype=float)
    if beta_star.size == 0:
        return 0.0
    g = 2.0 / tp.n * (tp.X_star.T @ (tp.y_star - tp.X_star @ beta_star))
    nz = beta_star != 0
    viol = np.where(nz, np.abs(g - lambda2 * np.sign(beta_star)),
                    np.maximum(0.0, np.abs(g) - lambda2))
    return float(np.max(viol))
