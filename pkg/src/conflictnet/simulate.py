"""ERGM simulation by Metropolis dyad toggling, exact enumeration, and GOF envelopes."""
from __future__ import annotations

import csv
import io
import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import logsumexp

from . import _kernel
from .errors import EstimationError, ModelSpecError
from .netdata import DegeneracyWarning, TemporalNetworkPanel, YearSlice
from .stats import ModelSpec, TermSpec, _dyadic_values, full_statistic, preset

_CODES = {
    "isolates": _kernel.ISOLATES,
    "mixed_two_star": _kernel.MIXED_TWO_STAR,
    "mixed_triangle": _kernel.MIXED_TRIANGLE,
    "gwesp": _kernel.GWESP,
    "degree": _kernel.DEGREE,
}
_CHUNK = 1 << 20


@dataclass(frozen=True)
class SamplerConfig:
    """Chain settings. ``burn_in``/``thin`` default to 10*C(n,2) and C(n,2) toggles."""

    burn_in: int | None = None
    thin: int | None = None
    n_draws: int = 1000
    seed: int = 0
    init: str = "observed"
    init_p: float = 0.5
    scan_order: Sequence[int] | None = None

    def __post_init__(self):
        if self.burn_in is not None and self.burn_in < 0:
            raise ValueError("burn_in must be non-negative")
        if self.thin is not None and self.thin < 1:
            raise ValueError("thin must be positive")
        if self.n_draws < 1:
            raise ValueError("n_draws must be positive")
        if self.init not in ("observed", "empty", "random"):
            raise ValueError("init must be 'observed', 'empty' or 'random'")
        if not 0.0 <= self.init_p <= 1.0:
            raise ValueError("init_p must lie in [0, 1]")

    def resolved(self, n: int) -> tuple[int, int]:
        m = max(n * (n - 1) // 2, 1)
        return (10 * m if self.burn_in is None else self.burn_in, m if self.thin is None else self.thin)


@dataclass(eq=False)
class ChainResult:
    stats: np.ndarray
    draws: np.ndarray | None
    acceptance: float
    mean_density: float
    terms: tuple[str, ...] = ()


def align_theta(theta, model: ModelSpec) -> np.ndarray:
    """Coefficient vector in model order from an array, a name->value mapping, or a FitResult."""
    terms = getattr(theta, "terms", None)
    if terms is not None:
        theta = dict(zip(terms, np.asarray(theta.theta, dtype=float)))
    if isinstance(theta, Mapping):
        missing = [n for n in model.names if n not in theta]
        if missing:
            raise ModelSpecError(f"theta lacks coefficients for {missing}")
        return np.array([float(theta[n]) for n in model.names])
    theta = np.asarray(theta, dtype=float).ravel()
    if theta.shape != (len(model),):
        raise ModelSpecError(f"theta has {theta.size} entries, model has {len(model)} terms")
    if not np.all(np.isfinite(theta)):
        raise ModelSpecError("theta must be finite")
    return theta


def _compile(model: ModelSpec, slc: YearSlice):
    n = slc.n
    p = len(model)
    kinds = np.zeros(p, dtype=np.int64)
    iparam = np.zeros(p, dtype=np.int64)
    fparam = np.zeros(p)
    tvec = np.zeros((p, n))
    ovec = np.zeros((p, n))
    cov = np.zeros((p, n, n))
    fixed = np.zeros((n, n), dtype=bool)
    for t, term in enumerate(model):
        if term.kind in _CODES:
            kinds[t] = _CODES[term.kind]
            if term.kind in ("mixed_two_star", "mixed_triangle"):
                tvec[t], ovec[t] = slc.labels.of(term.params["same_type"])
            elif term.kind == "gwesp":
                fparam[t] = term.params["decay"]
            elif term.kind == "degree":
                iparam[t] = term.params["k"]
        else:
            v = _dyadic_values(term, slc)
            miss = np.isnan(v)
            fixed |= miss
            cov[t] = np.where(miss, 0.0, v)
    np.fill_diagonal(fixed, True)
    return kinds, iparam, fparam, tvec, ovec, cov, fixed


def _initial_stats(model: ModelSpec, slc: YearSlice, adj: np.ndarray, cov: np.ndarray, kinds) -> np.ndarray:
    h = np.zeros(len(model))
    upper = np.triu(adj, 1).astype(float)
    for t, term in enumerate(model):
        if kinds[t] == _kernel.DYADIC:
            h[t] = float(np.sum(upper * cov[t]))
        else:
            h[t] = full_statistic(term, slc, adj=adj)
    return h


def run_chain(theta, model, slc: YearSlice, config: SamplerConfig, *, store_draws: bool = True) -> ChainResult:
    """Run one Metropolis chain on ``slc``'s roster and attributes.

    Dyads with a missing model covariate are held at their observed state and
    never proposed.
    """
    model = ModelSpec.coerce(model)
    theta = align_theta(theta, model)
    n = slc.n
    kinds, iparam, fparam, tvec, ovec, cov, fixed = _compile(model, slc)
    iu, ju = np.triu_indices(n, 1)
    free = ~fixed[iu, ju]
    free_i = iu[free].astype(np.int64)
    free_j = ju[free].astype(np.int64)
    rng = np.random.default_rng(config.seed)
    observed = np.asarray(slc.adjacency, dtype=np.int8)
    if config.init == "observed":
        adj = observed.copy()
    else:
        adj = np.where(fixed, observed, 0).astype(np.int8)
        if config.init == "random":
            bits = (rng.random(len(free_i)) < config.init_p).astype(np.int8)
            adj[free_i, free_j] = bits
            adj[free_j, free_i] = bits
    np.fill_diagonal(adj, 0)
    deg = adj.sum(axis=1).astype(np.int64)
    h = _initial_stats(model, slc, adj.astype(bool), cov, kinds)
    burn_in, thin = config.resolved(n)
    total = burn_in + config.n_draws * thin
    out_h = np.zeros((config.n_draws, len(model)))
    out_adj = np.zeros((config.n_draws if store_draws else 1, n, n), dtype=np.int8)
    m = len(free_i)
    accepted = 0
    if m == 0:
        out_h[:] = h
        out_adj[:] = adj
    else:
        order = None if config.scan_order is None else np.asarray(config.scan_order, dtype=np.int64)
        if order is not None and (order.min() < 0 or order.max() >= m):
            raise ValueError(f"scan_order entries must index the {m} free dyads")
        ptr = 0
        for start in range(0, total, _CHUNK):
            size = min(_CHUNK, total - start)
            steps = np.arange(start, start + size)
            if order is None:
                proposals = rng.integers(0, m, size=size)
            else:
                proposals = order[steps % len(order)]
            log_u = np.log(rng.random(size))
            record = (steps >= burn_in) & ((steps - burn_in + 1) % thin == 0)
            ptr, acc = _kernel.run_steps(
                adj, deg, h, theta, kinds, iparam, fparam, tvec, ovec, cov,
                free_i, free_j, proposals, log_u, record, out_h, out_adj, store_draws, ptr,
            )
            accepted += acc
    mdyads = max(n * (n - 1) // 2, 1)
    if store_draws:
        density = float(out_adj.sum(axis=(1, 2)).mean() / (2 * mdyads))
    else:
        k = model.names.index("edges") if "edges" in model.names else None
        density = float(out_h[:, k].mean() / mdyads) if k is not None else float("nan")
    return ChainResult(
        stats=out_h,
        draws=out_adj.astype(bool) if store_draws else None,
        acceptance=accepted / total if total else 0.0,
        mean_density=density,
        terms=model.names,
    )


def _warn_degenerate(result: ChainResult, year) -> None:
    d = result.mean_density
    if not math.isnan(d) and not 0.01 <= d <= 0.99:
        warnings.warn(
            f"year {year}: simulated networks are degenerate (mean density {d:.4f})",
            DegeneracyWarning,
            stacklevel=3,
        )


def sample_networks(theta, model, slc: YearSlice, config: SamplerConfig) -> list[YearSlice]:
    """Retained draws as year slices sharing ``slc``'s roster and attributes."""
    result = run_chain(theta, model, slc, config)
    _warn_degenerate(result, slc.year)
    return [slc.with_adjacency(a) for a in result.draws]


def sample_statistics(theta, model, slc: YearSlice, config: SamplerConfig) -> np.ndarray:
    """Model statistics of the retained draws, shape ``(n_draws, n_terms)``."""
    result = run_chain(theta, model, slc, config, store_draws=False)
    _warn_degenerate(result, slc.year)
    return result.stats


def draws_edgelist_csv(draws: Sequence[YearSlice]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["draw", "state_a", "state_b"])
    for k, d in enumerate(draws):
        for a, b in d.edges():
            w.writerow([k, a, b])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Exact enumeration
# ---------------------------------------------------------------------------

MAX_EXACT_NODES = 5


def enumerate_graphs(theta, model, slc: YearSlice):
    """All graphs on the roster with their statistic vectors and log weights theta'h."""
    model = ModelSpec.coerce(model)
    theta = align_theta(theta, model)
    n = slc.n
    if n > MAX_EXACT_NODES:
        raise ValueError(f"exact enumeration supports at most {MAX_EXACT_NODES} nodes, got {n}")
    iu, ju = np.triu_indices(n, 1)
    graphs, H = [], []
    for bits in itertools.product((0, 1), repeat=len(iu)):
        adj = np.zeros((n, n), dtype=bool)
        adj[iu, ju] = bits
        adj = adj | adj.T
        graphs.append(adj)
        H.append([full_statistic(t, slc, adj=adj) for t in model])
    H = np.array(H, dtype=float)
    return graphs, H, H @ theta


def enumerate_exact(theta, model, slc: YearSlice) -> tuple[np.ndarray, float]:
    """Exact expected statistics and normalising constant by summing over all graphs."""
    _, H, logw = enumerate_graphs(theta, model, slc)
    log_z = logsumexp(logw)
    probs = np.exp(logw - log_z)
    return probs @ H, float(math.exp(log_z))


# ---------------------------------------------------------------------------
# Goodness of fit
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GofRow:
    year: int
    term: str
    observed: float
    sim_mean: float
    lo95: float
    hi95: float
    within: bool


@dataclass(eq=False)
class GofReport:
    rows: list[GofRow] = field(default_factory=list)

    def by_year(self, year: int) -> list[GofRow]:
        return [r for r in self.rows if r.year == year]

    @property
    def coverage(self) -> float:
        return float(np.mean([r.within for r in self.rows])) if self.rows else float("nan")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["year", "term", "observed", "sim_mean", "lo95", "hi95", "within"])
        for r in self.rows:
            w.writerow([r.year, r.term, repr(r.observed), repr(r.sim_mean), repr(r.lo95), repr(r.hi95), int(r.within)])
        return buf.getvalue()


def goodness_of_fit(
    fit,
    panel: TemporalNetworkPanel,
    model,
    gof_terms=None,
    config: SamplerConfig | None = None,
    years: Sequence[int] | None = None,
) -> GofReport:
    """Observed statistics against the 95% envelope of networks simulated at the fitted theta.

    Each year is simulated on its own roster and attributes with a chain
    seeded from ``(config.seed, year)``.
    """
    if hasattr(fit, "converged") and not fit.converged:
        raise EstimationError("goodness of fit needs a converged fit")
    model = ModelSpec.coerce(model)
    theta = align_theta(fit, model)
    gof_terms = preset("gof_default") if gof_terms is None else ModelSpec.coerce(gof_terms)
    config = config or SamplerConfig(n_draws=200)
    # network GOF statistics ride along in the chain with coefficient 0; the
    # kernel then tracks them incrementally instead of recomputing per draw
    riders = [t for t in gof_terms if (t.endogenous or t.kind == "edges") and t.name not in model.names]
    chain_model = ModelSpec([*model, *riders])
    chain_theta = np.concatenate([theta, np.zeros(len(riders))])
    report = GofReport()
    for year in panel.years if years is None else years:
        slc = panel[year]
        seed = int(np.random.SeedSequence([config.seed, year]).generate_state(1)[0])
        cfg = SamplerConfig(
            burn_in=config.burn_in, thin=config.thin, n_draws=config.n_draws, seed=seed,
            init=config.init, init_p=config.init_p, scan_order=config.scan_order,
        )
        result = run_chain(chain_theta, chain_model, slc, cfg)
        _warn_degenerate(result, year)
        for term in gof_terms:
            if term.name in chain_model.names:
                sims = result.stats[:, chain_model.index(term.name)]
            else:
                sims = np.array([full_statistic(term, slc, adj=a) for a in result.draws])
            obs = full_statistic(term, slc)
            lo, hi = np.percentile(sims, [2.5, 97.5])
            report.rows.append(
                GofRow(year, term.name, obs, float(sims.mean()), float(lo), float(hi), bool(lo <= obs <= hi))
            )
    return report
