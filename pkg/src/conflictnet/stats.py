"""Network statistics, change statistics and pseudolikelihood design matrices.

Every model term has three evaluations that must agree:

* ``full_statistic`` computes h(N) for one year slice;
* ``change_statistic`` computes the toggle difference for a single dyad from
  the local neighbourhood of its endpoints;
* ``change_matrix`` computes the same difference for every dyad at once and
  feeds design-matrix assembly.

Change statistics are always taken with the focal dyad clamped absent, so
they do not depend on whether the dyad is currently tied.
"""
from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import ModelSpecError

if TYPE_CHECKING:  # pragma: no cover
    from .netdata import TemporalNetworkPanel, YearSlice

ENDOGENOUS = frozenset({"edges", "isolates", "mixed_two_star", "mixed_triangle", "gwesp", "degree"})
DYADIC = frozenset({"dyad_cov", "year_cov", "joint_indicator", "weak_link"})
KINDS = ENDOGENOUS | DYADIC
# edges is structurally endogenous but its change statistic is the constant 1
NETWORK_DEPENDENT = ENDOGENOUS - {"edges"}


# ---------------------------------------------------------------------------
# Regime labels
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RegimeLabels:
    """Democracy/autocracy indicators for one roster; ``known`` is False where polity is missing."""

    dem: np.ndarray
    aut: np.ndarray
    known: np.ndarray

    def of(self, same_type: str) -> tuple[np.ndarray, np.ndarray]:
        """Float indicator vectors (same-type, opposite-type); unknown labels read as 0."""
        d = np.where(self.known, self.dem, 0).astype(float)
        a = np.where(self.known, self.aut, 0).astype(float)
        if same_type == "dem":
            return d, a
        if same_type == "aut":
            return a, d
        raise ModelSpecError(f"same_type must be 'dem' or 'aut', got {same_type!r}")

    def swapped(self) -> "RegimeLabels":
        return RegimeLabels(self.aut.copy(), self.dem.copy(), self.known.copy())


def regime_indicators(polity, cuts) -> tuple[int | None, int | None]:
    """Return ``(dem, aut)`` for a single polity score.

    ``dem`` is 1 when polity exceeds ``cuts.democracy_cut`` and ``aut`` is 1
    when it falls below ``cuts.autocracy_cut``. Missing polity gives
    ``(None, None)``.
    """
    if polity is None or (isinstance(polity, float) and math.isnan(polity)):
        return None, None
    if not -10 <= polity <= 10:
        raise ValueError(f"polity {polity} outside [-10, 10]")
    return int(polity > cuts.democracy_cut), int(polity < cuts.autocracy_cut)


def regime_labels(polity: np.ndarray, cuts) -> RegimeLabels:
    polity = np.asarray(polity, dtype=float)
    known = ~np.isnan(polity)
    with np.errstate(invalid="ignore"):
        dem = (known & (polity > cuts.democracy_cut)).astype(np.int8)
        aut = (known & (polity < cuts.autocracy_cut)).astype(np.int8)
    for arr in (dem, aut, known):
        arr.setflags(write=False)
    return RegimeLabels(dem, aut, known)


# ---------------------------------------------------------------------------
# Model specification
# ---------------------------------------------------------------------------

_REQUIRED = {
    "mixed_two_star": ("same_type",),
    "mixed_triangle": ("same_type",),
    "gwesp": ("decay",),
    "dyad_cov": ("name",),
    "year_cov": ("name",),
    "joint_indicator": ("regime",),
    "degree": ("k",),
}


@dataclass(frozen=True, eq=False)
class TermSpec:
    kind: str
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ModelSpecError(f"unknown term kind {self.kind!r}")
        params = dict(self.params)
        if self.kind == "gwesp":
            params.setdefault("decay", 0.5)
        for key in _REQUIRED.get(self.kind, ()):
            if key not in params:
                raise ModelSpecError(f"term {self.kind!r} requires parameter {key!r}")
        if self.kind in ("mixed_two_star", "mixed_triangle") and params["same_type"] not in ("dem", "aut"):
            raise ModelSpecError(f"{self.kind}: same_type must be 'dem' or 'aut'")
        if self.kind == "joint_indicator" and params["regime"] not in ("dem", "aut"):
            raise ModelSpecError("joint_indicator: regime must be 'dem' or 'aut'")
        if self.kind == "gwesp":
            params["decay"] = float(params["decay"])
            if not params["decay"] > 0:
                raise ModelSpecError("gwesp decay must be positive")
        if self.kind == "degree":
            params["k"] = int(params["k"])
            if params["k"] < 0:
                raise ModelSpecError("degree k must be non-negative")
        object.__setattr__(self, "params", params)

    @property
    def name(self) -> str:
        p = self.params
        if "label" in p:
            return str(p["label"])
        if self.kind in ("mixed_two_star", "mixed_triangle"):
            return f"{self.kind}.{p['same_type']}"
        if self.kind == "gwesp":
            return f"gwesp.{p['decay']:g}"
        if self.kind in ("dyad_cov", "year_cov"):
            return str(p["name"])
        if self.kind == "joint_indicator":
            return f"joint_{p['regime']}"
        if self.kind == "degree":
            return f"degree.{p['k']}"
        return self.kind

    @property
    def endogenous(self) -> bool:
        return self.kind in NETWORK_DEPENDENT

    def to_json(self) -> dict:
        return {"term": self.kind, **self.params}

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "TermSpec":
        if not isinstance(obj, Mapping) or "term" not in obj:
            raise ModelSpecError(f"term entry must be an object with a 'term' key: {obj!r}")
        params = {k: v for k, v in obj.items() if k != "term"}
        return cls(obj["term"], params)

    def __repr__(self):
        return f"TermSpec({self.name})"


class ModelSpec(Sequence[TermSpec]):
    """Ordered collection of uniquely named terms."""

    def __init__(self, terms: Iterable[TermSpec]):
        self.terms = tuple(t if isinstance(t, TermSpec) else TermSpec.from_json(t) for t in terms)
        if not self.terms:
            raise ModelSpecError("a model needs at least one term")
        names = [t.name for t in self.terms]
        dup = sorted({n for n in names if names.count(n) > 1})
        if dup:
            raise ModelSpecError(f"duplicate term names: {dup}")

    def __getitem__(self, k):
        return self.terms[k]

    def __len__(self):
        return len(self.terms)

    def __iter__(self) -> Iterator[TermSpec]:
        return iter(self.terms)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(t.name for t in self.terms)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ModelSpecError(f"term {name!r} not in model {self.names}") from None

    @property
    def has_network_terms(self) -> bool:
        return any(t.endogenous for t in self.terms)

    def require_edges(self) -> None:
        if not any(t.kind == "edges" for t in self.terms):
            raise ModelSpecError("model must contain an 'edges' term")

    def to_json(self) -> list[dict]:
        return [t.to_json() for t in self.terms]

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "ModelSpec":
        return cls.coerce(json.loads(text))

    @classmethod
    def coerce(cls, obj) -> "ModelSpec":
        if isinstance(obj, ModelSpec):
            return obj
        if isinstance(obj, str):
            return preset(obj)
        if not isinstance(obj, (list, tuple)):
            raise ModelSpecError("model must be a preset name or a list of term objects")
        return cls(obj)

    def __repr__(self):
        return f"ModelSpec({list(self.names)})"


def _covariate_block():
    return [
        {"term": "edges"},
        {"term": "dyad_cov", "name": "contiguity"},
        {"term": "dyad_cov", "name": "cap_ratio"},
        {"term": "dyad_cov", "name": "cinc_high"},
        {"term": "dyad_cov", "name": "alliance"},
        {"term": "year_cov", "name": "ln_states"},
        {"term": "dyad_cov", "name": "peace_years"},
        {"term": "dyad_cov", "name": "peace_years_sq"},
        {"term": "dyad_cov", "name": "peace_years_cu"},
        {"term": "isolates"},
        {"term": "joint_indicator", "regime": "dem"},
        {"term": "joint_indicator", "regime": "aut"},
    ]


_MTS = [{"term": "mixed_two_star", "same_type": "dem"}, {"term": "mixed_two_star", "same_type": "aut"}]
_MTRI = [{"term": "mixed_triangle", "same_type": "dem"}, {"term": "mixed_triangle", "same_type": "aut"}]

PRESETS = {
    "model1": _covariate_block(),
    "model2": _covariate_block() + _MTS + [{"term": "gwesp", "decay": 0.5}],
    "model3": _covariate_block() + _MTS + _MTRI,
    "model4": _covariate_block() + [{"term": "weak_link"}] + _MTS + _MTRI,
    "gof_default": [
        {"term": "edges"},
        {"term": "isolates"},
        {"term": "degree", "k": 1},
        {"term": "degree", "k": 2},
        {"term": "degree", "k": 3},
        *_MTS,
        *_MTRI,
        {"term": "gwesp", "decay": 0.5},
    ],
}


def preset(name: str) -> ModelSpec:
    """Named specifications mirroring the four published models plus a GOF battery."""
    try:
        return ModelSpec(PRESETS[name])
    except KeyError:
        raise ModelSpecError(f"unknown model preset {name!r}; choose from {sorted(PRESETS)}") from None


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------


def _adj(slc: "YearSlice", adj) -> np.ndarray:
    a = slc.adjacency if adj is None else adj
    return np.asarray(a, dtype=float)


def _dyadic_values(term: TermSpec, slc: "YearSlice") -> np.ndarray:
    """Per-dyad value of an exogenous term; NaN marks a missing covariate."""
    n = slc.n
    kind = term.kind
    if kind == "edges":
        v = np.ones((n, n))
    elif kind == "dyad_cov":
        name = term.params["name"]
        if name not in slc.dyad_cov:
            raise ModelSpecError(f"year {slc.year}: dyadic covariate {name!r} not available")
        v = np.array(slc.dyad_cov[name], dtype=float)
    elif kind == "year_cov":
        name = term.params["name"]
        if name not in slc.year_cov:
            raise ModelSpecError(f"year {slc.year}: year covariate {name!r} not available")
        v = np.full((n, n), float(slc.year_cov[name]))
    elif kind == "joint_indicator":
        lab = slc.labels
        ind = (lab.dem if term.params["regime"] == "dem" else lab.aut).astype(float)
        ind = np.where(lab.known, ind, np.nan)
        v = np.outer(ind, ind)
    elif kind == "weak_link":
        p = np.asarray(slc.polity, dtype=float)
        v = np.minimum(p[:, None], p[None, :])
    else:  # pragma: no cover
        raise ModelSpecError(f"{kind} is not dyadic")
    np.fill_diagonal(v, 0.0)
    return v


def _count_missing_label_paths(A: np.ndarray, known: np.ndarray) -> int:
    deg = A.sum(axis=1)
    unknown_nbrs = A @ (~known).astype(float)
    all_pairs = deg * (deg - 1) / 2
    known_pairs = (deg - unknown_nbrs) * (deg - unknown_nbrs - 1) / 2
    per_center = np.where(known, all_pairs - known_pairs, all_pairs)
    return int(round(per_center.sum()))


def full_statistic(term: TermSpec, slc: "YearSlice", adj=None, counter: Counter | None = None) -> float:
    """h(N) for one term on one year slice (optionally on an alternative adjacency)."""
    A = _adj(slc, adj)
    kind = term.kind
    if kind == "edges":
        return float(np.triu(A, 1).sum())
    if kind == "isolates":
        return float(np.sum(A.sum(axis=1) == 0))
    if kind == "degree":
        return float(np.sum(A.sum(axis=1) == term.params["k"]))
    if kind in ("mixed_two_star", "mixed_triangle"):
        T, O = slc.labels.of(term.params["same_type"])
        if counter is not None and not slc.labels.known.all():
            counter["missing_label"] += _count_missing_label_paths(A, slc.labels.known)
        if kind == "mixed_two_star":
            c = A @ T
            return float(np.sum(O * c * (c - 1) / 2))
        M = A * T[None, :]
        closed = np.einsum("jk,kl,jl->j", M, A, M) / 2
        return float(np.sum(O * closed))
    if kind == "gwesp":
        alpha = term.params["decay"]
        q = 1.0 - math.exp(-alpha)
        sp = A @ A
        w = math.exp(alpha) * (1.0 - q**sp)
        return float(np.sum(np.triu(A * w, 1)))
    v = _dyadic_values(term, slc)
    return float(np.sum(np.triu(A, 1) * v)) if not np.isnan(v[np.triu(A, 1) > 0]).any() else float("nan")


def change_statistic(term: TermSpec, slc: "YearSlice", i: int, j: int, adj=None) -> float:
    """Toggle difference for dyad (i, j), from the endpoints' neighbourhoods only."""
    if i == j:
        raise ValueError("change statistic needs i != j")
    A = slc.adjacency if adj is None else adj
    ri = np.asarray(A[i], dtype=float)
    rj = np.asarray(A[j], dtype=float)
    e = float(ri[j])
    kind = term.kind
    if kind == "edges":
        return 1.0
    if kind in ("isolates", "degree"):
        di = ri.sum() - e
        dj = rj.sum() - e
        if kind == "isolates":
            return -float(di == 0) - float(dj == 0)
        k = term.params["k"]
        return float(di + 1 == k) - float(di == k) + float(dj + 1 == k) - float(dj == k)
    if kind == "mixed_two_star":
        T, O = slc.labels.of(term.params["same_type"])
        cj = float(rj @ T) - e * T[i]
        ci = float(ri @ T) - e * T[j]
        return T[i] * O[j] * cj + T[j] * O[i] * ci
    if kind == "mixed_triangle":
        T, O = slc.labels.of(term.params["same_type"])
        common = ri * rj
        return float(T[i] * T[j] * (common @ O) + (T[i] * O[j] + O[i] * T[j]) * (common @ T))
    if kind == "gwesp":
        alpha = term.params["decay"]
        q = 1.0 - math.exp(-alpha)
        common = np.nonzero(ri * rj)[0]
        total = math.exp(alpha) * (1.0 - q ** len(common))
        for k in common:
            rk = np.asarray(A[k], dtype=float)
            sp_ik = float(ri @ rk) - e
            sp_jk = float(rj @ rk) - e
            total += q**sp_ik + q**sp_jk
        return float(total)
    v = _dyadic_values(term, slc)
    return float(v[i, j])


def change_matrix(term: TermSpec, slc: "YearSlice", adj=None) -> np.ndarray:
    """Change statistics of ``term`` for every dyad (symmetric, zero diagonal)."""
    A = _adj(slc, adj)
    kind = term.kind
    n = A.shape[0]
    if kind in ("edges", "dyad_cov", "year_cov", "joint_indicator", "weak_link"):
        return _dyadic_values(term, slc)
    if kind in ("isolates", "degree"):
        deg = A.sum(axis=1)
        di = deg[:, None] - A
        dj = deg[None, :] - A
        if kind == "isolates":
            out = -(di == 0).astype(float) - (dj == 0).astype(float)
        else:
            k = term.params["k"]
            out = (
                (di + 1 == k).astype(float) - (di == k) + (dj + 1 == k) - (dj == k)
            ).astype(float)
    elif kind == "mixed_two_star":
        T, O = slc.labels.of(term.params["same_type"])
        c = A @ T
        # centre j: T_i O_j (c_j - A_ij T_i); centre i: T_j O_i (c_i - A_ij T_j)
        out = np.outer(T, O) * (c[None, :] - A * T[:, None]) + np.outer(O, T) * (c[:, None] - A * T[None, :])
    elif kind == "mixed_triangle":
        T, O = slc.labels.of(term.params["same_type"])
        cn_o = (A * O[None, :]) @ A
        cn_t = (A * T[None, :]) @ A
        out = np.outer(T, T) * cn_o + (np.outer(T, O) + np.outer(O, T)) * cn_t
    elif kind == "gwesp":
        alpha = term.params["decay"]
        q = 1.0 - math.exp(-alpha)
        sp = A @ A
        Q = A * q**sp
        partner = Q @ A + A @ Q
        out = math.exp(alpha) * (1.0 - q**sp) + partner * np.where(A > 0, 1.0 / q, 1.0)
    else:  # pragma: no cover
        raise ModelSpecError(kind)
    out = np.array(out, dtype=float)
    np.fill_diagonal(out, 0.0)
    return out


# ---------------------------------------------------------------------------
# Design matrices
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class DesignMatrix:
    """Pooled pseudolikelihood rows, ordered by year then dyad key."""

    X: np.ndarray
    y: np.ndarray
    year: np.ndarray
    state_a: np.ndarray
    state_b: np.ndarray
    columns: tuple[str, ...]
    years: tuple[int, ...]
    offsets: np.ndarray
    n_excluded: int = 0
    excluded_by_year: dict = field(default_factory=dict)

    @property
    def n_rows(self) -> int:
        return len(self.y)

    @property
    def weight(self) -> np.ndarray:
        return np.ones(self.n_rows)

    def year_block(self, year: int) -> slice:
        k = self.years.index(year)
        return slice(int(self.offsets[k]), int(self.offsets[k + 1]))

    def resample_years(self, positions: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
        """Stack the row blocks of the given year positions (with repetition)."""
        idx = np.concatenate(
            [np.arange(self.offsets[p], self.offsets[p + 1]) for p in positions]
        ) if len(positions) else np.zeros(0, dtype=int)
        return self.X[idx], self.y[idx]

    def dyad_mask(self, a: str, b: str) -> np.ndarray:
        return (self.state_a == a) & (self.state_b == b)


def _year_rows(slc: "YearSlice", model: ModelSpec):
    n = slc.n
    iu, ju = np.triu_indices(n, 1)
    if len(iu) == 0:
        return np.zeros((0, len(model))), np.zeros(0, dtype=np.int8), iu, ju, 0
    cols = [change_matrix(t, slc)[iu, ju] for t in model]
    X = np.column_stack(cols) if cols else np.zeros((len(iu), 0))
    ok = ~np.isnan(X).any(axis=1)
    y = np.asarray(slc.adjacency, dtype=bool)[iu, ju].astype(np.int8)
    return X[ok], y[ok], iu[ok], ju[ok], int((~ok).sum())


def build_design_matrix(
    panel: "TemporalNetworkPanel", model: ModelSpec, years: Iterable[int] | None = None
) -> DesignMatrix:
    """One row per in-roster dyad-year with complete covariates (listwise deletion)."""
    from .errors import ValidationError

    model = ModelSpec.coerce(model)
    model.require_edges()
    use = panel.years if years is None else tuple(y for y in panel.years if y in set(years))
    Xs, ys, yrs, sa, sb = [], [], [], [], []
    offsets = [0]
    excluded = {}
    for year in use:
        slc = panel[year]
        X, y, iu, ju, n_ex = _year_rows(slc, model)
        roster = np.array(slc.roster, dtype=object)
        Xs.append(X)
        ys.append(y)
        yrs.append(np.full(len(y), year, dtype=np.int64))
        sa.append(roster[iu])
        sb.append(roster[ju])
        offsets.append(offsets[-1] + len(y))
        excluded[year] = n_ex
    n_rows = offsets[-1]
    if n_rows == 0:
        raise ValidationError("design matrix has no usable rows")
    return DesignMatrix(
        X=np.ascontiguousarray(np.vstack(Xs)),
        y=np.concatenate(ys),
        year=np.concatenate(yrs),
        state_a=np.concatenate(sa),
        state_b=np.concatenate(sb),
        columns=model.names,
        years=tuple(use),
        offsets=np.array(offsets, dtype=np.int64),
        n_excluded=int(sum(excluded.values())),
        excluded_by_year=excluded,
    )


# ---------------------------------------------------------------------------
# Per-year feature counts
# ---------------------------------------------------------------------------

FEATURES = ("joint_dem_edges", "joint_aut_edges", "mixed_edges", "mixed_two_stars", "mixed_triangles")


def yearly_feature_counts(panel: "TemporalNetworkPanel") -> list[tuple[int, str, int]]:
    """Tidy ``(year, feature, count)`` rows of the regime-typed network features."""
    rows = []
    mts = [TermSpec("mixed_two_star", {"same_type": s}) for s in ("dem", "aut")]
    mtri = [TermSpec("mixed_triangle", {"same_type": s}) for s in ("dem", "aut")]
    for slc in panel:
        A = np.triu(np.asarray(slc.adjacency, dtype=float), 1)
        d, a = slc.labels.of("dem")
        counts = {
            "joint_dem_edges": d @ A @ d,
            "joint_aut_edges": a @ A @ a,
            "mixed_edges": d @ A @ a + a @ A @ d,
            "mixed_two_stars": sum(full_statistic(t, slc) for t in mts),
            "mixed_triangles": sum(full_statistic(t, slc) for t in mtri),
        }
        rows.extend((slc.year, f, int(round(counts[f]))) for f in FEATURES)
    return rows
