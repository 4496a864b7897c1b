"""Out-of-sample tie prediction, closure-probability analysis and influence scans.

Scoring functions accept either a :class:`PredictionSet` or plain
``(labels, scores)`` arrays so they can be used on any binary prediction.
"""
from __future__ import annotations

import csv
import io
import json
import math
import warnings
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import expit
from scipy.stats import rankdata

from .errors import EstimationError, MetricError, ModelSpecError, PreconditionError
from .estimate import DEFAULT_TOL, fit_logistic
from .netdata import TemporalNetworkPanel, id_key
from .simulate import align_theta
from .stats import ModelSpec, build_design_matrix, change_matrix

DEFAULT_STRATUM_CAP = 6


def _fmt(v: float) -> str:
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v))


# ---------------------------------------------------------------------------
# Tie prediction
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class PredictionSet:
    """Per dyad-year tie probabilities with the observed outcome."""

    year: np.ndarray
    state_a: np.ndarray
    state_b: np.ndarray
    probability: np.ndarray
    label: np.ndarray
    n_skipped: int = 0

    def __post_init__(self):
        self.probability = np.asarray(self.probability, dtype=float)
        self.label = np.asarray(self.label, dtype=np.int8)
        if not np.all(np.isfinite(self.probability)):
            raise MetricError("prediction probabilities must be finite")

    def __len__(self):
        return len(self.label)

    @property
    def years(self) -> tuple[int, ...]:
        return tuple(int(y) for y in np.unique(self.year))

    def for_year(self, year: int) -> "PredictionSet":
        m = self.year == year
        return PredictionSet(self.year[m], self.state_a[m], self.state_b[m], self.probability[m], self.label[m])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["year", "state_a", "state_b", "probability", "label"])
        for row in zip(self.year, self.state_a, self.state_b, self.probability, self.label):
            w.writerow([int(row[0]), row[1], row[2], repr(float(row[3])), int(row[4])])
        return buf.getvalue()


def _train_years(theta, train_years):
    if train_years is not None:
        return set(int(y) for y in train_years)
    return set(int(y) for y in getattr(theta, "years", ()) or ())


def predict_ties(theta, model, panel: TemporalNetworkPanel, test_years: Sequence[int], *, train_years=None) -> PredictionSet:
    """Conditional one-toggle tie probabilities on the observed test-year networks.

    ``theta`` may be a fitted result (its training years are then checked
    against ``test_years``), a mapping or an array in model order. Dyads
    with a missing covariate are skipped and counted.
    """
    model = ModelSpec.coerce(model)
    test_years = [int(y) for y in test_years]
    overlap = sorted(_train_years(theta, train_years) & set(test_years))
    if overlap:
        raise PreconditionError(f"training and test years overlap: {overlap}")
    missing = [y for y in test_years if y not in panel.years]
    if missing:
        raise PreconditionError(f"test years not in panel: {missing}")
    beta = align_theta(theta, model)
    design = build_design_matrix(panel, model, test_years)
    return PredictionSet(
        year=design.year,
        state_a=design.state_a,
        state_b=design.state_b,
        probability=expit(design.X @ beta),
        label=design.y,
        n_skipped=design.n_excluded,
    )


# ---------------------------------------------------------------------------
# Ranking metrics
# ---------------------------------------------------------------------------


def _labels_scores(preds, scores=None):
    if scores is None:
        labels, scores = preds.label, preds.probability
    else:
        labels = preds
    labels = np.asarray(labels).astype(int)
    scores = np.asarray(scores, dtype=float)
    if labels.shape != scores.shape:
        raise MetricError("labels and scores differ in length")
    if not np.isin(labels, (0, 1)).all():
        raise MetricError("labels must be 0/1")
    return labels, scores


def roc_auc(preds, scores=None) -> float:
    """Probability that a random positive outscores a random negative (ties count half)."""
    labels, scores = _labels_scores(preds, scores)
    n1 = int(labels.sum())
    n0 = len(labels) - n1
    if n1 == 0 or n0 == 0:
        raise MetricError("ROC-AUC is undefined with a single class")
    ranks = rankdata(scores)  # average ranks resolve ties as half-wins
    u = ranks[labels == 1].sum() - n1 * (n1 + 1) / 2
    return float(u / (n1 * n0))


def pr_auc(preds, scores=None) -> float:
    """Average precision: step-interpolated area under the precision-recall curve.

    Thresholds sweep the distinct scores in descending order; tied scores
    enter together.
    """
    labels, scores = _labels_scores(preds, scores)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise MetricError("PR-AUC is undefined without positives")
    order = np.argsort(-scores, kind="stable")
    s, l = scores[order], labels[order]
    last = np.r_[s[1:] != s[:-1], True]  # final position of each tie group
    tp = np.cumsum(l)[last]
    seen = np.flatnonzero(last) + 1
    precision = tp / seen
    recall = tp / n_pos
    gain = np.diff(np.r_[0.0, recall])
    return float(np.sum(gain * precision))


@dataclass(frozen=True)
class YearScore:
    year: int | str
    roc_auc: float
    pr_auc: float
    n_pos: int
    n_dyads: int
    flagged: bool


def _score(key, labels, scores) -> YearScore:
    n_pos = int(labels.sum())
    single = n_pos == 0 or n_pos == len(labels)
    roc = float("nan") if single else roc_auc(labels, scores)
    pr = float("nan") if n_pos == 0 else pr_auc(labels, scores)
    return YearScore(key, roc, pr, n_pos, int(len(labels)), single)


def per_year_scores(preds: PredictionSet) -> list[YearScore]:
    """ROC/PR AUC within each test year; single-class years are flagged, not scored."""
    if len(preds) == 0:
        raise MetricError("no predictions to score")
    return [_score(y, preds.for_year(y).label, preds.for_year(y).probability) for y in preds.years]


def pooled_score(preds: PredictionSet) -> YearScore:
    """The same metrics over all test years at once (not the mean of the yearly values)."""
    return _score("pooled", preds.label, preds.probability)


def scores_csv(rows: Sequence[YearScore]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["year", "roc_auc", "pr_auc", "n_pos", "n_dyads"])
    for r in rows:
        w.writerow([r.year, _fmt(r.roc_auc), _fmt(r.pr_auc), r.n_pos, r.n_dyads])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Closure probabilities
# ---------------------------------------------------------------------------


class ClosureWarning(UserWarning):
    """No same-regime dyad with an opposite-regime shared enemy was found."""


@dataclass(eq=False)
class ClosureDistribution:
    """Closure probabilities grouped by the number of opposite-regime shared enemies."""

    network: str
    cap: int
    strata: dict[int, np.ndarray] = field(default_factory=dict)
    n_skipped: int = 0

    def stratum_label(self, w: int) -> str:
        return f"{w}+" if w == self.cap else str(w)

    def pooled(self) -> np.ndarray:
        parts = [self.strata[w] for w in sorted(self.strata)]
        return np.concatenate(parts) if parts else np.zeros(0)

    def means(self) -> dict[int, float]:
        return {w: float(v.mean()) for w, v in sorted(self.strata.items())}

    def rows(self):
        for w in sorted(self.strata):
            for p in self.strata[w]:
                yield self.network, self.stratum_label(w), float(p)


def closure_probabilities(
    theta,
    model,
    panel: TemporalNetworkPanel,
    network_type: str = "all_mid",
    cap: int = DEFAULT_STRATUM_CAP,
) -> ClosureDistribution:
    """Tie probabilities of same-regime dyads that share opposite-regime enemies.

    For every year and every jointly democratic or jointly autocratic dyad
    ``(i, j)`` with ``w >= 1`` common enemies of the opposite regime type, the
    conditional tie probability ``logistic(delta . theta)`` (focal dyad
    clamped absent) is stored in stratum ``min(w, cap)``.
    """
    if cap < 1:
        raise PreconditionError("stratum cap must be at least 1")
    model = ModelSpec.coerce(model)
    beta = align_theta(theta, model)
    buckets: dict[int, list[float]] = {}
    skipped = 0
    for slc in panel:
        if slc.n < 3:
            continue
        A = np.asarray(slc.adjacency, dtype=float)
        eta = None
        iu, ju = np.triu_indices(slc.n, 1)
        for same in ("dem", "aut"):
            T, O = slc.labels.of(same)
            w = (A * O[None, :]) @ A  # w[i, j] = opposite-type common neighbours
            pick = (T[iu] * T[ju] > 0) & (w[iu, ju] >= 1)
            if not pick.any():
                continue
            if eta is None:
                eta = sum(b * change_matrix(t, slc) for b, t in zip(beta, model))
            for i, j in zip(iu[pick], ju[pick]):
                if np.isnan(eta[i, j]):
                    skipped += 1
                    continue
                buckets.setdefault(min(int(round(w[i, j])), cap), []).append(float(expit(eta[i, j])))
    dist = ClosureDistribution(network_type, cap, {k: np.array(v) for k, v in sorted(buckets.items())}, skipped)
    if not dist.strata:
        warnings.warn(f"{network_type}: no same-regime dyad has an opposite-regime shared enemy", ClosureWarning, stacklevel=2)
    return dist


def closure_csv(dists: Sequence[ClosureDistribution]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["network", "stratum", "probability"])
    for d in dists:
        for net, stratum, p in d.rows():
            w.writerow([net, stratum, repr(p)])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Two-sample Kolmogorov-Smirnov
# ---------------------------------------------------------------------------


def kolmogorov_sf(lam: float) -> float:
    """Survival function of the Kolmogorov distribution, P(K > lam)."""
    if lam <= 0:
        return 1.0
    if lam < 1.18:
        # Jacobi-theta form converges fast for small arguments
        s = sum(math.exp(-((2 * k - 1) ** 2) * math.pi**2 / (8 * lam * lam)) for k in range(1, 8))
        return min(1.0, max(0.0, 1.0 - math.sqrt(2 * math.pi) / lam * s))
    s = sum((-1) ** (k - 1) * math.exp(-2 * k * k * lam * lam) for k in range(1, 101))
    return min(1.0, max(0.0, 2.0 * s))


@dataclass(frozen=True)
class KSResult:
    D: float
    D_one_sided: float
    p_one_sided: float
    p_two_sided: float
    n: int
    m: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "D": self.D,
                "D_one_sided": self.D_one_sided,
                "p_one_sided": self.p_one_sided,
                "p_two_sided": self.p_two_sided,
                "n": self.n,
                "m": self.m,
            },
            indent=2,
            sort_keys=True,
        ) + "\n"


def ks_two_sample(x, y) -> KSResult:
    """Two-sample Kolmogorov-Smirnov statistic with asymptotic p-values.

    The one-sided alternative is that ``x`` tends to be larger than ``y``
    (its ECDF lies below); its statistic is ``sup(F_y - F_x)``.
    """
    x = np.sort(np.asarray(x, dtype=float))
    y = np.sort(np.asarray(y, dtype=float))
    n, m = len(x), len(y)
    if n == 0 or m == 0:
        raise MetricError("both samples must be nonempty")
    # streaming sweep over the merged sample points
    i = j = 0
    d_two = d_plus = 0.0
    while i < n or j < m:
        v = min(x[i] if i < n else math.inf, y[j] if j < m else math.inf)
        while i < n and x[i] == v:
            i += 1
        while j < m and y[j] == v:
            j += 1
        diff = j / m - i / n
        d_plus = max(d_plus, diff)
        d_two = max(d_two, abs(diff))
    en = n * m / (n + m)
    p_two = kolmogorov_sf(math.sqrt(en) * d_two)
    p_one = min(1.0, math.exp(-2.0 * en * d_plus * d_plus))
    return KSResult(float(d_two), float(d_plus), p_one, p_two, n, m)


# ---------------------------------------------------------------------------
# Influence scan
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InfluenceRow:
    state_a: str
    state_b: str
    delta: float
    rank: int | None
    profile: str
    error: str | None = None


@dataclass(eq=False)
class InfluenceReport:
    target: str
    baseline: float
    rows: list[InfluenceRow]

    @property
    def ranked(self) -> list[InfluenceRow]:
        return [r for r in self.rows if r.rank is not None]

    @property
    def flagged(self) -> list[InfluenceRow]:
        return [r for r in self.rows if r.rank is None]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["state_a", "state_b", "delta", "rank", "profile"])
        for r in self.rows:
            profile = r.profile if r.error is None else f"{r.profile}; refit failed: {r.error}"
            w.writerow([r.state_a, r.state_b, _fmt(r.delta), "" if r.rank is None else r.rank, profile])
        return buf.getvalue()


def _regime(slc, k) -> str:
    if not slc.labels.known[k]:
        return "unknown"
    if slc.labels.dem[k]:
        return "dem"
    if slc.labels.aut[k]:
        return "aut"
    return "anoc"


def _dyad_profiles(panel: TemporalNetworkPanel) -> dict[tuple[str, str], str]:
    pairs: dict[tuple[str, str], Counter] = {}
    mids: Counter = Counter()
    for slc in panel:
        regimes = [_regime(slc, k) for k in range(slc.n)]
        iu, ju = np.triu_indices(slc.n, 1)
        for i, j in zip(iu, ju):
            key = (slc.roster[i], slc.roster[j])
            pair = "-".join(sorted((regimes[i], regimes[j])))
            pairs.setdefault(key, Counter())[pair] += 1
            mids[key] += int(slc.adjacency[i, j])
    out = {}
    for key, counts in pairs.items():
        parts = [f"{p} x{c}" for p, c in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))]
        out[key] = f"{'; '.join(parts)}; ties {mids[key]}"
    return out


def influence_scan(
    panel: TemporalNetworkPanel,
    covariate_model,
    target_term: str,
    *,
    tol: float = DEFAULT_TOL,
    max_iter: int = 100,
    threads: int = 1,
) -> InfluenceReport:
    """Leave-one-dyad-out refits of a plain logistic model on dyadic covariates.

    Each dyad that is ever jointly in system is dropped (all of its years) and
    the model refitted; ``delta`` is the refitted ``target_term`` coefficient
    minus the full-data one. Rows are ranked by ``delta`` descending (ties by
    dyad key); dyads whose refit fails are flagged and left unranked.
    """
    model = ModelSpec.coerce(covariate_model)
    if model.has_network_terms:
        raise ModelSpecError("the influence scan takes dyadic covariates only")
    if target_term not in model.names:
        raise ModelSpecError(f"target term {target_term!r} is not in the model")
    k = model.index(target_term)
    design = build_design_matrix(panel, model)
    base = fit_logistic(design, tol, max_iter)
    b0 = float(base.theta[k])
    groups: dict[tuple[str, str], list[int]] = {}
    for r, key in enumerate(zip(design.state_a, design.state_b)):
        groups.setdefault(key, []).append(r)
    profiles = _dyad_profiles(panel)
    dyads = sorted(profiles, key=lambda d: (id_key(d[0]), id_key(d[1])))

    def refit(dyad):
        rows = groups.get(dyad)
        if not rows:
            return dyad, 0.0, None
        keep = np.ones(design.n_rows, dtype=bool)
        keep[rows] = False
        try:
            fit = fit_logistic((design.X[keep], design.y[keep]), tol, max_iter, theta0=base.theta, columns=design.columns)
        except EstimationError as exc:
            return dyad, float("nan"), f"{type(exc).__name__}: {exc}"
        return dyad, float(fit.theta[k]) - b0, None

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(refit, dyads))
    else:
        results = [refit(d) for d in dyads]
    ok = [r for r in results if r[2] is None]
    bad = [r for r in results if r[2] is not None]
    ok.sort(key=lambda r: (-r[1], id_key(r[0][0]), id_key(r[0][1])))
    rows = [InfluenceRow(d[0], d[1], delta, rank, profiles[d]) for rank, (d, delta, _) in enumerate(ok, start=1)]
    rows += [InfluenceRow(d[0], d[1], delta, None, profiles[d], err) for d, delta, err in bad]
    return InfluenceReport(target_term, b0, rows)
