"""Maximum pseudolikelihood fitting and the temporal (year-block) bootstrap."""
from __future__ import annotations

import io
import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import expit

from .errors import BootstrapError, ConvergenceError, EstimationError, SeparationError, SingularHessianError
from .stats import DesignMatrix, ModelSpec, build_design_matrix

DEFAULT_TOL = 1e-8


@dataclass(eq=False)
class FitResult:
    terms: tuple[str, ...]
    theta: np.ndarray
    ci_lo95: np.ndarray
    ci_hi95: np.ndarray
    n_rows: int
    n_boot: int
    converged: bool
    gradient_norm: float
    log_pseudolikelihood: float
    iterations: int = 0
    n_excluded: int = 0
    years: tuple[int, ...] = ()
    n_failed: int = 0
    seed: int | None = None
    replicates: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def from_theta(cls, terms: Sequence[str], theta) -> "FitResult":
        """Wrap a fixed coefficient vector (e.g. a generating theta) as a fit."""
        theta = np.asarray(theta, dtype=float)
        nan = np.full_like(theta, np.nan)
        return cls(tuple(terms), theta, nan, nan.copy(), 0, 0, True, 0.0, float("nan"))

    def coef(self, name: str) -> float:
        return float(self.theta[self.terms.index(name)])

    def metadata(self) -> dict:
        return {
            "terms": list(self.terms),
            "n_rows": self.n_rows,
            "exclusions": self.n_excluded,
            "n_boot": self.n_boot,
            "n_failed": self.n_failed,
            "seed": self.seed,
            "converged": self.converged,
            "gradient_norm": self.gradient_norm,
            "log_pseudolikelihood": self.log_pseudolikelihood,
            "iterations": self.iterations,
            "years": list(self.years),
        }


def log_pseudolikelihood(theta, X, y) -> float:
    eta = X @ theta
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def gradient(theta, X, y) -> np.ndarray:
    return X.T @ (y - expit(X @ theta))


def _check_rank(X, columns):
    norms = np.linalg.norm(X, axis=0)
    zero = np.nonzero(norms == 0)[0]
    if len(zero):
        raise SingularHessianError([columns[k] for k in zero])
    Z = X / norms
    _, s, vt = np.linalg.svd(Z, full_matrices=False)
    if s[-1] <= s[0] * 1e-10:
        v = vt[-1]
        involved = np.nonzero(np.abs(v) > 1e-6)[0]
        raise SingularHessianError([columns[k] for k in involved])


def _check_separation(X, y, columns):
    pos = y == 1
    if pos.all() or not pos.any():
        raise SeparationError("(response)", "response has a single class; the pseudolikelihood has no maximum")
    for k, name in enumerate(columns):
        col = X[:, k]
        if col.min() == col.max():
            continue
        x1, x0 = col[pos], col[~pos]
        if x1.min() >= x0.max() or x1.max() <= x0.min():
            raise SeparationError(name)


def fit_logistic(
    design,
    tol: float = DEFAULT_TOL,
    max_iter: int = 100,
    *,
    ridge: float = 0.0,
    theta0=None,
    columns: Sequence[str] | None = None,
    check: bool = True,
) -> FitResult:
    """Maximise the log-pseudolikelihood by damped Newton steps.

    ``design`` is a :class:`DesignMatrix` or an ``(X, y)`` pair. With
    ``ridge > 0`` the rank check is skipped and ``ridge * I`` is added to the
    Hessian when solving for the step; the gradient (and hence the optimum)
    is unchanged.
    """
    if isinstance(design, DesignMatrix):
        X, y, columns = design.X, design.y, design.columns
        n_excluded, years = design.n_excluded, design.years
    else:
        X, y = design
        n_excluded, years = 0, ()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    columns = tuple(columns) if columns is not None else tuple(f"x{k}" for k in range(p))
    if n == 0:
        raise EstimationError("empty design matrix")
    if check:
        if ridge == 0.0:
            _check_rank(X, columns)
        _check_separation(X, y, columns)

    theta = np.zeros(p) if theta0 is None else np.array(theta0, dtype=float)
    ll = log_pseudolikelihood(theta, X, y)
    trace = []
    eye = np.eye(p)
    for it in range(max_iter + 1):
        mu = expit(X @ theta)
        g = X.T @ (y - mu)
        gnorm = float(np.max(np.abs(g)))
        trace.append((it, ll, gnorm))
        w = mu * (1.0 - mu)
        H = X.T @ (X * w[:, None]) + ridge * eye
        if gnorm < tol:
            theta, ll, gnorm = _polish(theta, ll, gnorm, H, g, X, y)
            return _result(columns, theta, n, True, gnorm, ll, it, n_excluded, years)
        if it == max_iter:
            break
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            raise SingularHessianError(columns) from None
        if not np.all(np.isfinite(step)):
            raise SingularHessianError(columns)
        t = 1.0
        for _ in range(40):
            cand = theta + t * step
            ll_new = log_pseudolikelihood(cand, X, y)
            if ll_new >= ll - 1e-12 * max(1.0, abs(ll)):
                break
            t *= 0.5
        else:
            break
        theta, ll = cand, ll_new

    eta = X @ theta
    if np.max(np.abs(eta)) > 30:
        raise SeparationError(columns[int(np.argmax(np.abs(theta)))])
    raise ConvergenceError(f"no convergence after {max_iter} Newton iterations (|grad|={trace[-1][2]:.3g})", trace)


def _polish(theta, ll, gnorm, H, g, X, y):
    """One extra full Newton step once the gradient test passes.

    Quadratic convergence takes the estimate from ``O(tol)`` to machine
    precision; the step is kept only if it does not worsen the gradient.
    """
    try:
        cand = theta + np.linalg.solve(H, g)
    except np.linalg.LinAlgError:
        return theta, ll, gnorm
    g_new = float(np.max(np.abs(gradient(cand, X, y))))
    if np.all(np.isfinite(cand)) and g_new <= gnorm:
        return cand, log_pseudolikelihood(cand, X, y), g_new
    return theta, ll, gnorm


def _result(columns, theta, n, converged, gnorm, ll, it, n_excluded, years):
    nan = np.full(len(theta), np.nan)
    return FitResult(
        terms=tuple(columns),
        theta=theta,
        ci_lo95=nan,
        ci_hi95=nan.copy(),
        n_rows=int(n),
        n_boot=0,
        converged=converged,
        gradient_norm=gnorm,
        log_pseudolikelihood=ll,
        iterations=it,
        n_excluded=n_excluded,
        years=tuple(years),
    )


def replicate_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(index)])


def bootstrap_design(
    design: DesignMatrix,
    n_boot: int,
    seed: int,
    *,
    tol: float = DEFAULT_TOL,
    max_iter: int = 100,
    threads: int = 1,
    max_failure_rate: float = 0.2,
) -> FitResult:
    """Point fit plus percentile CIs from resampling whole network-years."""
    n_years = len(design.years)
    if n_years < 2:
        raise EstimationError("the temporal bootstrap needs at least two years")
    if n_boot < 1:
        raise EstimationError("n_boot must be at least 1")
    point = fit_logistic(design, tol, max_iter)

    def one(b):
        positions = replicate_rng(seed, b).integers(0, n_years, size=n_years)
        Xb, yb = design.resample_years(positions)
        try:
            fit = fit_logistic((Xb, yb), tol, max_iter, theta0=point.theta, columns=design.columns)
        except EstimationError as exc:
            return b, None, f"replicate {b}: {type(exc).__name__}: {exc}"
        return b, fit.theta, None

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(one, range(n_boot)))
    else:
        results = [one(b) for b in range(n_boot)]
    reps = np.array([r[1] for r in results if r[1] is not None]).reshape(-1, len(point.theta))
    failures = [r[2] for r in results if r[2] is not None]
    if len(failures) > max_failure_rate * n_boot or len(reps) == 0:
        raise BootstrapError(f"{len(failures)} of {n_boot} bootstrap replicates failed", failures)
    lo, hi = np.percentile(reps, [2.5, 97.5], axis=0)
    point.ci_lo95, point.ci_hi95 = lo, hi
    point.n_boot = n_boot
    point.n_failed = len(failures)
    point.seed = seed
    point.replicates = reps
    return point


def bootstrap_fit(
    panel,
    model,
    n_boot: int = 500,
    seed: int = 0,
    *,
    years=None,
    tol: float = DEFAULT_TOL,
    max_iter: int = 100,
    threads: int = 1,
) -> FitResult:
    """Build the pooled design matrix for ``panel`` and run :func:`bootstrap_design`."""
    design = build_design_matrix(panel, ModelSpec.coerce(model), years)
    return bootstrap_design(design, n_boot, seed, tol=tol, max_iter=max_iter, threads=threads)


@dataclass(frozen=True)
class CoefficientRow:
    term: str
    estimate: float
    lo: float
    hi: float
    reliable: bool


def significance_table(fit: FitResult) -> list[CoefficientRow]:
    """Flag coefficients whose 95% interval excludes zero."""
    rows = []
    for name, est, lo, hi in zip(fit.terms, fit.theta, fit.ci_lo95, fit.ci_hi95):
        rows.append(CoefficientRow(name, float(est), float(lo), float(hi), bool(lo > 0 or hi < 0)))
    return rows


def coefficients_csv(fit: FitResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["term", "estimate", "lo95", "hi95", "reliable"])
    for r in significance_table(fit):
        w.writerow([r.term, repr(r.estimate), repr(r.lo), repr(r.hi), int(r.reliable)])
    return buf.getvalue()


def read_coefficients_csv(text: str) -> tuple[tuple[str, ...], np.ndarray]:
    rows = list(csv.DictReader(io.StringIO(text)))
    return tuple(r["term"] for r in rows), np.array([float(r["estimate"]) for r in rows])
