"""Monte Carlo harness for the partial spline model designs.

Each replicate draws from a counter-based Philox stream keyed by
``(seed, replicate)``, so replicates can run in any order or concurrently and
still produce identical numbers. Aggregation always runs in replicate order.

Covariates are generated on their natural scale, the fit uses the
standardized design, and ``mse_beta`` compares coefficients on the generating
scale. Centering the covariates moves ``col_means' beta0`` into the intercept
of ``f``, so ``mise_f`` is measured against ``f0(t) + col_means' beta0``.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .exceptions import DomainError, PsplineError
from .psa import PsaFit, make_dataset, partial_spline
from .smoother import evaluate_spline, factorize, smooth
from .tuning import TuningConfig, gcv_lambda1, tune

METHODS = ("PS", "PSL", "PSA", "Oracle")
_PENALTY = {"PS": "none", "PSL": "lasso", "PSA": "adaptive"}
THREADS_ENV = "SPARSE_PSPLINE_THREADS"
F_GRID = np.linspace(0.0, 1.0, 201)


def f_model1(t):
    return 1.5 * np.sin(2 * np.pi * np.asarray(t, dtype=float))


def f_model2(t):
    t = np.asarray(t, dtype=float)
    return (t**10 * (1 - t) ** 4 / (3 * special.beta(11, 5))
            + 4 * t**4 * (1 - t) ** 10 / (15 * special.beta(5, 11)))


def f_model3(t):
    t = np.asarray(t, dtype=float)
    return (0.2 * t**29 * (1 - t) ** 16 / special.beta(30, 17)
            + 0.8 * t**2 * (1 - t) ** 10 / special.beta(3, 11))


_F = {"sin": f_model1, "beta-mix2": f_model2, "beta-mix3": f_model3}

_BETA3 = np.array([4.0] * 5 + [3.0] * 5 + [2.0] * 5)


@dataclass(frozen=True)
class ModelSpec:
    """Design of one simulation setting.

    ``x_dist`` is ``"uniform"`` or ``"ar1"`` (standard normal with
    ``corr(X_i, X_j) = rho^|i-j|``); ``err_dist`` is ``"gaussian"`` (scale
    ``sigma``) or ``"t"`` (``df`` degrees of freedom).
    """

    name: str
    n: int
    beta0: tuple
    f0: str = "sin"
    f_scale: float = 1.0
    x_dist: str = "uniform"
    rho: float = 0.0
    err_dist: str = "gaussian"
    sigma: float = 1.0
    df: float = 10.0
    seed: int = 0

    def __post_init__(self):
        beta = np.asarray(self.beta0, dtype=float)
        nz = np.flatnonzero(beta)
        if nz.size and not np.array_equal(nz, np.arange(nz.size)):
            raise DomainError("nonzero coefficients must occupy the leading positions")
        if self.n < 10:
            raise DomainError("n must be at least 10")
        if self.f0 not in _F:
            raise DomainError(f"unknown f0 {self.f0!r}; choose from {sorted(_F)}")
        if self.x_dist not in ("uniform", "ar1"):
            raise DomainError(f"unknown x_dist {self.x_dist!r}")
        if not 0 <= self.rho < 1:
            raise DomainError("rho must lie in [0, 1)")
        if self.err_dist == "gaussian":
            if not self.sigma >= 0:
                raise DomainError("sigma must be nonnegative")
        elif self.err_dist == "t":
            if not self.df > 2:
                raise DomainError("t errors need df > 2")
        else:
            raise DomainError(f"unknown err_dist {self.err_dist!r}")
        object.__setattr__(self, "beta0", tuple(float(b) for b in beta))

    @property
    def d(self):
        return len(self.beta0)

    @property
    def q(self):
        return int(np.count_nonzero(self.beta0))

    def f(self, t):
        return self.f_scale * _F[self.f0](t)

    def to_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def model1(n=100, sigma=0.5, seed=0):
    return ModelSpec("model1", n, (3.0, 2.5, 2.0, 1.5) + (0.0,) * 11, "sin", sigma=sigma,
                     seed=seed)


def model2(n=200, rho=0.3, beta_scale=1.0, seed=0):
    return ModelSpec("model2", n, (3.0 * beta_scale,) * 10 + (0.0,) * 10, "beta-mix2",
                     x_dist="ar1", rho=rho, err_dist="t", df=10.0, seed=seed)


def model3(n=200, sigma=0.5, beta_scale=1.0, f_scale=1.0, seed=0):
    beta = tuple(_BETA3 * beta_scale) + (0.0,) * 45
    return ModelSpec("model3", n, beta, "beta-mix3", f_scale=f_scale, x_dist="ar1", rho=0.5,
                     sigma=sigma, seed=seed)


@dataclass(frozen=True, eq=False)
class Truth:
    beta0: np.ndarray
    support: np.ndarray
    f0_knots: np.ndarray
    f_target: np.ndarray
    spec: ModelSpec = None


def rng_for(seed, replicate):
    """Philox generator for substream ``(seed, replicate)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(replicate),))
    return np.random.Generator(np.random.Philox(ss))


def _ar1_normal(rng, n, d, rho):
    z = rng.standard_normal((n, d))
    x = np.empty_like(z)
    x[:, 0] = z[:, 0]
    c = np.sqrt(1 - rho**2)
    for j in range(1, d):
        x[:, j] = rho * x[:, j - 1] + c * z[:, j]
    return x


def draw_raw(spec, replicate=0):
    """Raw ``(X, t, y)`` for one replicate, in draw order."""
    rng = rng_for(spec.seed, replicate)
    n, d = spec.n, spec.d
    if spec.x_dist == "uniform":
        X = rng.uniform(size=(n, d))
    else:
        X = _ar1_normal(rng, n, d, spec.rho)
    t = rng.uniform(size=n)
    if spec.err_dist == "gaussian":
        eps = spec.sigma * rng.standard_normal(n)
    else:
        eps = rng.standard_t(spec.df, size=n)
    y = X @ np.asarray(spec.beta0) + spec.f(t) + eps
    return X, t, y


def generate(spec, replicate=0):
    """Standardized, sorted :class:`Dataset` plus its :class:`Truth`."""
    X, t, y = draw_raw(spec, replicate)
    ds = make_dataset(X, t, y, standardize=True, ties="average")
    beta0 = np.asarray(spec.beta0)
    f0 = spec.f(ds.t)
    truth = Truth(beta0=beta0, support=np.flatnonzero(beta0), f0_knots=f0,
                  f_target=f0 + ds.col_means @ beta0, spec=spec)
    return ds, truth


def gen_model1(n, sigma, seed, replicate=0):
    return generate(model1(n, sigma, seed), replicate)


def gen_model2(n, rho, beta_scale, seed, replicate=0):
    return generate(model2(n, rho, beta_scale, seed), replicate)


def gen_model3(n, sigma, beta_scale, f_scale, seed, replicate=0):
    return generate(model3(n, sigma, beta_scale, f_scale, seed), replicate)


def oracle_fit(dataset, truth, lambda1=None, sys=None, grid=None):
    """Partial spline on the true support; zeros elsewhere.

    ``lambda1`` defaults to the GCV choice for the restricted design.
    """
    sys = factorize(dataset.t) if sys is None else sys
    sub = truth.support
    restricted = make_dataset(dataset.X[:, sub], dataset.t, dataset.y, standardize=False)
    if lambda1 is None:
        lambda1, _ = gcv_lambda1(restricted, grid, sys)
    ps = partial_spline(restricted, lambda1, sys)
    beta = np.zeros(dataset.d)
    beta[sub] = ps.beta_tilde
    f_fit = smooth(sys, lambda1, dataset.y - dataset.X @ beta)
    return PsaFit(beta_hat=beta, b=f_fit.b, c=f_fit.c, lambda1=float(lambda1), lambda2=0.0,
                  gamma=1.0, weights=np.where(beta != 0, 0.0, np.inf),
                  active_set=np.flatnonzero(beta != 0), fitted=dataset.X @ beta + f_fit.fitted,
                  f_fitted=f_fit.fitted, penalty="oracle")


@dataclass(frozen=True)
class ReplicateMetrics:
    mse_beta: float
    mise_f: float
    size: int
    correct_zeros: int
    incorrect_zeros: int
    exact_support: bool
    per_variable_selected: tuple


def evaluate_replicate(fit, truth, dataset):
    """Metrics of one fit; ``fit.beta_hat`` is on the standardized scale."""
    beta = dataset.to_original_scale(fit.beta_hat)
    sel = beta != 0
    true_nz = truth.beta0 != 0
    err = fit.f_fitted - truth.f_target
    return ReplicateMetrics(
        mse_beta=float(np.sum((beta - truth.beta0) ** 2)),
        mise_f=float(np.mean(err**2)),
        size=int(sel.sum()),
        correct_zeros=int(np.sum(~sel & ~true_nz)),
        incorrect_zeros=int(np.sum(~sel & true_nz)),
        exact_support=bool(np.array_equal(sel, true_nz)),
        per_variable_selected=tuple(bool(s) for s in sel),
    )


def run_replicate(spec, replicate, methods=METHODS, config=None, dump_grid=False):
    """Generate, tune and evaluate every method on one replicate.

    Returns ``{method: (ReplicateMetrics, fhat_on_grid or None)}``.
    """
    config = TuningConfig() if config is None else config
    ds, truth = generate(spec, replicate)
    sys = factorize(ds.t, config.m)
    out = {}
    for method in methods:
        if method == "Oracle":
            fit = oracle_fit(ds, truth, sys=sys, grid=config.lambda1_grid)
        else:
            fit = tune(ds, config, penalty=_PENALTY[method], sys=sys).fit
        curve = None
        if dump_grid:
            # shift back so the curve estimates f0 itself
            curve = evaluate_spline(sys, fit.b, fit.c, F_GRID) - ds.col_means @ truth.beta0
        out[method] = (evaluate_replicate(fit, truth, ds), curve)
    return out


def _safe_replicate(args):
    spec, r, methods, config, dump = args
    try:
        return r, run_replicate(spec, r, methods, config, dump), None
    except PsplineError as exc:
        return r, None, f"{type(exc).__name__}: {exc}"


def worker_count(requested=None):
    cap = os.environ.get(THREADS_ENV)
    n = requested or os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError as exc:
            raise DomainError(f"{THREADS_ENV} must be an integer, got {cap!r}") from exc
    return max(1, n)


def _mean_se(values):
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return float("nan"), float("nan")
    se = float(np.std(v, ddof=1) / np.sqrt(v.size)) if v.size > 1 else float("nan")
    return float(np.mean(v)), se


@dataclass(frozen=True, eq=False)
class SimulationReport:
    spec: ModelSpec
    replicates: int
    methods: tuple
    table: dict
    selection: dict
    failures: list
    per_replicate: dict = field(repr=False)
    fhat_grid: dict = field(default=None, repr=False)

    def row(self, method):
        return self.table[method]


METRIC_FIELDS = (("mse", "mse_beta"), ("mise", "mise_f"), ("size", "size"),
                 ("correct0", "correct_zeros"), ("incorrect0", "incorrect_zeros"))


def aggregate(spec, results, methods, replicates, dump):
    per = {m: [] for m in methods}
    grids = {m: [] for m in methods} if dump else None
    failures = []
    for r, res, err in sorted(results, key=lambda x: x[0]):
        if err is not None:
            failures.append({"replicate": r, "error": err})
            continue
        for m in methods:
            per[m].append(res[m][0])
            if dump:
                grids[m].append((r, res[m][1]))
    table, selection = {}, {}
    for m in methods:
        rows = per[m]
        entry = {}
        for key, attr in METRIC_FIELDS:
            mean, se = _mean_se([getattr(x, attr) for x in rows])
            entry[f"{key}_mean"], entry[f"{key}_se"] = mean, se
        entry["p_correct"] = float(np.mean([x.exact_support for x in rows])) if rows else float("nan")
        table[m] = entry
        sel = np.array([x.per_variable_selected for x in rows], dtype=float).reshape(-1, spec.d)
        selection[m] = sel.mean(axis=0).tolist() if rows else [float("nan")] * spec.d
    return SimulationReport(spec=spec, replicates=replicates, methods=tuple(methods), table=table,
                            selection=selection, failures=failures, per_replicate=per,
                            fhat_grid=grids)


def run_study(spec, methods=METHODS, replicates=100, config=None, threads=None, dump_grid=False):
    """Run ``replicates`` Monte Carlo replicates and aggregate the metrics.

    Failed replicates (numerical errors) are excluded and listed in
    ``report.failures``.
    """
    if replicates < 2:
        raise DomainError("need at least 2 replicates")
    methods = tuple(methods)
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise DomainError(f"unknown methods {sorted(unknown)}; choose from {METHODS}")
    config = TuningConfig() if config is None else config
    jobs = [(spec, r, methods, config, dump_grid) for r in range(replicates)]
    workers = worker_count(threads)
    if workers == 1:
        results = [_safe_replicate(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_safe_replicate, jobs))
    return aggregate(spec, results, methods, replicates, dump_grid)
