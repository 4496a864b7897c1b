"""Temporal network panels: ingest, validation, derived covariates, export.

A panel is a sequence of :class:`YearSlice` objects, one per calendar year.
Each slice holds the roster of in-system states (sorted in canonical id
order), a symmetric boolean adjacency matrix, node attributes, and dyadic
covariate matrices in which ``NaN`` marks a missing value.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ParseError, ValidationError
from .stats import RegimeLabels, regime_labels

NODE_COLUMNS = ("year", "state_id", "polity", "cinc", "in_system")
DYAD_COLUMNS = ("year", "state_a", "state_b", "mid", "hostility", "contiguity", "alliance")


def id_key(state_id: str):
    """Sort key giving numeric ids numeric order and placing them before text ids."""
    s = str(state_id)
    if s.lstrip("-").isdigit():
        return (0, int(s), s)
    return (1, 0, s)


def dyad_key(a: str, b: str) -> tuple[str, str]:
    return (a, b) if id_key(a) <= id_key(b) else (b, a)


PEACE_CLOCKS = ("prior", "contemporaneous")


@dataclass(frozen=True)
class PanelDeriveConfig:
    fatal_threshold: int = 4
    democracy_cut: int = 6
    autocracy_cut: int = -6
    peace_year_cap: int | None = None
    peace_clock: str = "prior"

    def __post_init__(self):
        if self.peace_clock not in PEACE_CLOCKS:
            raise ValidationError(f"peace_clock must be one of {PEACE_CLOCKS}, got {self.peace_clock!r}")
        if not self.democracy_cut > self.autocracy_cut:
            raise ValidationError(
                f"democracy_cut ({self.democracy_cut}) must exceed autocracy_cut ({self.autocracy_cut})"
            )
        if self.peace_year_cap is not None and self.peace_year_cap < 0:
            raise ValidationError("peace_year_cap must be non-negative")


@dataclass(frozen=True)
class NodeYearRecord:
    year: int
    state_id: str
    polity: int | None
    cinc: float | None
    in_system: bool


@dataclass(frozen=True)
class DyadYearRecord:
    year: int
    state_a: str
    state_b: str
    mid: bool
    hostility: int | None
    contiguity: int | None
    alliance: int | None
    extra: Mapping[str, float] = field(default_factory=dict)


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class YearSlice:
    """One network-year.

    ``mid``/``hostility``/``recorded`` keep the raw dyad records so a panel can
    be exported losslessly; ``adjacency`` is the network actually modelled
    (all-MID or fatal-MID).
    """

    year: int
    roster: tuple[str, ...]
    adjacency: np.ndarray
    polity: np.ndarray
    cinc: np.ndarray
    labels: RegimeLabels
    dyad_cov: Mapping[str, np.ndarray] = field(default_factory=dict)
    year_cov: Mapping[str, float] = field(default_factory=dict)
    mid: np.ndarray | None = None
    hostility: np.ndarray | None = None
    recorded: np.ndarray | None = None

    @property
    def n(self) -> int:
        return len(self.roster)

    def index(self, state_id) -> int:
        return self.roster.index(str(state_id))

    def edges(self) -> list[tuple[str, str]]:
        ii, jj = np.nonzero(np.triu(self.adjacency, 1))
        return [(self.roster[i], self.roster[j]) for i, j in zip(ii, jj)]

    def n_edges(self) -> int:
        return int(np.triu(self.adjacency, 1).sum())

    def with_adjacency(self, adjacency: np.ndarray) -> "YearSlice":
        adj = np.array(adjacency, dtype=bool)
        _check_adjacency(adj, self.year)
        return replace(self, adjacency=_frozen(adj))


def _check_adjacency(adj: np.ndarray, year) -> None:
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise ValidationError(f"year {year}: adjacency must be square")
    if not np.array_equal(adj, adj.T):
        raise ValidationError(f"year {year}: adjacency must be symmetric")
    if np.any(np.diag(adj)):
        raise ValidationError(f"year {year}: self-ties are not allowed")


@dataclass(frozen=True, eq=False)
class TemporalNetworkPanel:
    slices: tuple[YearSlice, ...]
    extra_names: tuple[str, ...] = ()
    network: str = "all_mid"

    def __post_init__(self):
        years = [s.year for s in self.slices]
        if years != sorted(years) or len(set(years)) != len(years):
            raise ValidationError("panel years must be strictly increasing")
        object.__setattr__(self, "_by_year", {s.year: s for s in self.slices})

    @property
    def years(self) -> tuple[int, ...]:
        return tuple(s.year for s in self.slices)

    def __getitem__(self, year: int) -> YearSlice:
        try:
            return self._by_year[year]
        except KeyError:
            raise KeyError(f"year {year} not in panel") from None

    def __iter__(self):
        return iter(self.slices)

    def __len__(self):
        return len(self.slices)

    def subset(self, years: Iterable[int]) -> "TemporalNetworkPanel":
        keep = set(years)
        return replace(self, slices=tuple(s for s in self.slices if s.year in keep))

    def n_edges(self) -> int:
        return sum(s.n_edges() for s in self.slices)

    def equals(self, other: "TemporalNetworkPanel") -> bool:
        """Exact equality of rosters, networks, attributes and covariates (NaN == NaN)."""
        if self.years != other.years or self.extra_names != other.extra_names:
            return False
        for a, b in zip(self.slices, other.slices):
            if a.roster != b.roster or a.year_cov != b.year_cov:
                return False
            pairs = [
                (a.adjacency, b.adjacency),
                (a.polity, b.polity),
                (a.cinc, b.cinc),
                (a.labels.dem, b.labels.dem),
                (a.labels.aut, b.labels.aut),
                (a.labels.known, b.labels.known),
                (a.mid, b.mid),
                (a.hostility, b.hostility),
                (a.recorded, b.recorded),
            ]
            if set(a.dyad_cov) != set(b.dyad_cov):
                return False
            pairs += [(a.dyad_cov[k], b.dyad_cov[k]) for k in a.dyad_cov]
            for x, y in pairs:
                if (x is None) != (y is None):
                    return False
                if x is not None and not np.array_equal(x, y, equal_nan=x.dtype.kind == "f"):
                    return False
        return True


def make_slice(
    adjacency,
    polity,
    *,
    year: int = 0,
    roster: Sequence[str] | None = None,
    cinc=None,
    dyad_cov: Mapping[str, np.ndarray] | None = None,
    year_cov: Mapping[str, float] | None = None,
    config: PanelDeriveConfig | None = None,
) -> YearSlice:
    """Build a single year slice directly from arrays (``NaN`` polity = unknown regime)."""
    adj = np.array(adjacency, dtype=bool)
    _check_adjacency(adj, year)
    n = adj.shape[0]
    polity = np.array(polity, dtype=float)
    if polity.shape != (n,):
        raise ValidationError("polity must have one entry per node")
    roster = tuple(str(r) for r in (roster if roster is not None else range(1, n + 1)))
    cinc = np.full(n, np.nan) if cinc is None else np.array(cinc, dtype=float)
    return YearSlice(
        year=year,
        roster=roster,
        adjacency=_frozen(adj),
        polity=_frozen(polity),
        cinc=_frozen(cinc),
        labels=regime_labels(polity, config or PanelDeriveConfig()),
        dyad_cov={k: _frozen(np.array(v, dtype=float)) for k, v in (dyad_cov or {}).items()},
        year_cov=dict(year_cov or {}),
    )


# ---------------------------------------------------------------------------
# CSV parsing
# ---------------------------------------------------------------------------


def _parse_int(text, path, line, name, *, required=True):
    text = text.strip()
    if text == "":
        if required:
            raise ParseError(path, line, f"missing required field {name!r}")
        return None
    try:
        return int(text)
    except ValueError:
        try:
            value = float(text)
        except ValueError:
            raise ParseError(path, line, f"field {name!r}: expected integer, got {text!r}") from None
        if not value.is_integer():
            raise ParseError(path, line, f"field {name!r}: expected integer, got {text!r}")
        return int(value)


def _parse_float(text, path, line, name):
    text = text.strip()
    if text == "":
        return None
    try:
        value = float(text)
    except ValueError:
        raise ParseError(path, line, f"field {name!r}: expected number, got {text!r}") from None
    if not math.isfinite(value):
        raise ParseError(path, line, f"field {name!r}: non-finite value {text!r}")
    return value


def _parse_bool(text, path, line, name):
    t = text.strip().lower()
    if t in ("1", "true"):
        return True
    if t in ("0", "false"):
        return False
    raise ParseError(path, line, f"field {name!r}: expected 0/1, got {text!r}")


def _open_rows(path, required):
    path = Path(path)
    fh = path.open(newline="")
    reader = csv.reader(fh)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        fh.close()
        raise ParseError(path, 1, "empty file") from None
    missing = [c for c in required if c not in header]
    if missing:
        fh.close()
        raise ParseError(path, 1, f"header missing columns {missing}")
    return fh, reader, header


def read_node_csv(path) -> list[NodeYearRecord]:
    fh, reader, header = _open_rows(path, NODE_COLUMNS)
    col = {c: header.index(c) for c in NODE_COLUMNS}
    records = []
    with fh:
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(path, lineno, f"expected {len(header)} fields, got {len(row)}")
            state = row[col["state_id"]].strip()
            if not state:
                raise ParseError(path, lineno, "empty state_id")
            records.append(
                NodeYearRecord(
                    year=_parse_int(row[col["year"]], path, lineno, "year"),
                    state_id=state,
                    polity=_parse_int(row[col["polity"]], path, lineno, "polity", required=False),
                    cinc=_parse_float(row[col["cinc"]], path, lineno, "cinc"),
                    in_system=_parse_bool(row[col["in_system"]], path, lineno, "in_system"),
                )
            )
    return records


def read_dyad_csv(path) -> tuple[list[DyadYearRecord], tuple[str, ...]]:
    """Parse a dyad-year CSV; returns the records and the names of extra covariate columns."""
    fh, reader, header = _open_rows(path, DYAD_COLUMNS)
    col = {c: header.index(c) for c in DYAD_COLUMNS}
    extras = [h for h in header if h not in DYAD_COLUMNS]
    records = []
    with fh:
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(path, lineno, f"expected {len(header)} fields, got {len(row)}")
            a, b = row[col["state_a"]].strip(), row[col["state_b"]].strip()
            if not a or not b:
                raise ParseError(path, lineno, "empty state identifier")
            mid_text = row[col["mid"]].strip()
            if mid_text not in ("0", "1"):
                raise ParseError(path, lineno, f"field 'mid': expected 0 or 1, got {mid_text!r}")
            records.append(
                DyadYearRecord(
                    year=_parse_int(row[col["year"]], path, lineno, "year"),
                    state_a=a,
                    state_b=b,
                    mid=mid_text == "1",
                    hostility=_parse_int(row[col["hostility"]], path, lineno, "hostility", required=False),
                    contiguity=_parse_int(row[col["contiguity"]], path, lineno, "contiguity", required=False),
                    alliance=_parse_int(row[col["alliance"]], path, lineno, "alliance", required=False),
                    extra={
                        name: v
                        for name in extras
                        if (v := _parse_float(row[header.index(name)], path, lineno, name)) is not None
                    },
                )
            )
    return records, tuple(extras)


# ---------------------------------------------------------------------------
# Panel construction
# ---------------------------------------------------------------------------


def build_panel(
    nodes: Sequence[NodeYearRecord],
    dyads: Sequence[DyadYearRecord],
    config: PanelDeriveConfig,
    extra_names: Sequence[str] = (),
) -> TemporalNetworkPanel:
    """Validate records and assemble the all-MID panel."""
    seen = set()
    by_year: dict[int, list[NodeYearRecord]] = {}
    for r in nodes:
        if (r.state_id, r.year) in seen:
            raise ValidationError(f"duplicate node-year ({r.state_id}, {r.year})")
        seen.add((r.state_id, r.year))
        if r.polity is not None and not -10 <= r.polity <= 10:
            raise ValidationError(f"polity {r.polity} out of [-10, 10] for ({r.state_id}, {r.year})")
        if r.cinc is not None and not 0.0 <= r.cinc <= 1.0:
            raise ValidationError(f"cinc {r.cinc} out of [0, 1] for ({r.state_id}, {r.year})")
        if r.in_system:
            by_year.setdefault(r.year, []).append(r)

    dyads_by_year: dict[int, dict[tuple[str, str], DyadYearRecord]] = {}
    for d in dyads:
        if d.state_a == d.state_b:
            raise ValidationError(f"self-dyad ({d.state_a}, {d.state_a}) in year {d.year}")
        key = dyad_key(d.state_a, d.state_b)
        bucket = dyads_by_year.setdefault(d.year, {})
        if key in bucket:
            raise ValidationError(f"duplicate dyad {key[0]}-{key[1]} in year {d.year}")
        if d.mid and d.hostility is None:
            raise ValidationError(f"dyad {key[0]}-{key[1]} year {d.year}: mid=1 requires hostility")
        if d.hostility is not None and not 1 <= d.hostility <= 5:
            raise ValidationError(f"dyad {key[0]}-{key[1]} year {d.year}: hostility {d.hostility} not in 1..5")
        if d.contiguity is not None and not 0 <= d.contiguity <= 6:
            raise ValidationError(f"dyad {key[0]}-{key[1]} year {d.year}: contiguity {d.contiguity} not in 0..6")
        bucket[key] = d

    if dyads_by_year and not set(dyads_by_year) & set(by_year):
        raise ValidationError("node and dyad files share no years")

    slices = []
    for year in sorted(by_year):
        recs = sorted(by_year[year], key=lambda r: id_key(r.state_id))
        roster = tuple(r.state_id for r in recs)
        pos = {s: k for k, s in enumerate(roster)}
        n = len(roster)
        polity = np.array([np.nan if r.polity is None else float(r.polity) for r in recs])
        cinc = np.array([np.nan if r.cinc is None else r.cinc for r in recs])
        mid = np.zeros((n, n), dtype=bool)
        recorded = np.zeros((n, n), dtype=bool)
        hostility = np.full((n, n), np.nan)
        covs = {name: np.full((n, n), np.nan) for name in ("contiguity", "alliance", *extra_names)}
        for (a, b), d in dyads_by_year.get(year, {}).items():
            if a not in pos or b not in pos:
                off = a if a not in pos else b
                raise ValidationError(
                    f"dyad {a}-{b} in year {year} references state {off} not in the state system"
                )
            i, j = pos[a], pos[b]
            recorded[i, j] = recorded[j, i] = True
            mid[i, j] = mid[j, i] = d.mid
            if d.hostility is not None:
                hostility[i, j] = hostility[j, i] = d.hostility
            if d.contiguity is not None:
                covs["contiguity"][i, j] = covs["contiguity"][j, i] = d.contiguity
            if d.alliance is not None:
                covs["alliance"][i, j] = covs["alliance"][j, i] = d.alliance
            for name, v in d.extra.items():
                covs[name][i, j] = covs[name][j, i] = v
        slices.append(
            YearSlice(
                year=year,
                roster=roster,
                adjacency=_frozen(mid.copy()),
                polity=_frozen(polity),
                cinc=_frozen(cinc),
                labels=regime_labels(polity, config),
                dyad_cov={k: _frozen(v) for k, v in covs.items()},
                year_cov={},
                mid=_frozen(mid),
                hostility=_frozen(hostility),
                recorded=_frozen(recorded),
            )
        )
    orphan = sorted(set(dyads_by_year) - set(by_year))
    if orphan:
        raise ValidationError(f"dyad rows in years with no in-system states: {orphan[:5]}")
    return TemporalNetworkPanel(tuple(slices), extra_names=tuple(extra_names))


def ingest_panel(node_file, dyad_file, config: PanelDeriveConfig | None = None) -> TemporalNetworkPanel:
    config = config or PanelDeriveConfig()
    nodes = read_node_csv(node_file)
    dyads, extras = read_dyad_csv(dyad_file)
    return build_panel(nodes, dyads, config, extras)


def _fmt_num(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if float(v).is_integer():
        return str(int(v))
    return repr(float(v))


def export_panel(panel: TemporalNetworkPanel, node_file, dyad_file) -> None:
    """Write the raw panel back to the two input CSVs in canonical order."""
    with open(node_file, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(NODE_COLUMNS)
        for s in panel:
            for k, sid in enumerate(s.roster):
                polity = s.polity[k]
                w.writerow(
                    [
                        s.year,
                        sid,
                        "" if np.isnan(polity) else int(polity),
                        "" if np.isnan(s.cinc[k]) else repr(float(s.cinc[k])),
                        1,
                    ]
                )
    with open(dyad_file, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DYAD_COLUMNS + tuple(panel.extra_names))
        for s in panel:
            recorded = s.recorded if s.recorded is not None else np.ones((s.n, s.n), dtype=bool)
            mid = s.mid if s.mid is not None else s.adjacency
            for i in range(s.n):
                for j in range(i + 1, s.n):
                    if not recorded[i, j]:
                        continue
                    row = [
                        s.year,
                        s.roster[i],
                        s.roster[j],
                        int(mid[i, j]),
                        _fmt_num(None if s.hostility is None else s.hostility[i, j]),
                        _fmt_num(s.dyad_cov["contiguity"][i, j]),
                        _fmt_num(s.dyad_cov["alliance"][i, j]),
                    ]
                    for name in panel.extra_names:
                        v = s.dyad_cov[name][i, j]
                        row.append("" if np.isnan(v) else repr(float(v)))
                    w.writerow(row)


# ---------------------------------------------------------------------------
# Derivations
# ---------------------------------------------------------------------------


def derive_networks(
    panel: TemporalNetworkPanel, config: PanelDeriveConfig | None = None
) -> tuple[TemporalNetworkPanel, TemporalNetworkPanel]:
    """Split the raw panel into the all-MID and fatal-MID networks."""
    config = config or PanelDeriveConfig()
    all_slices, fatal_slices = [], []
    for s in panel:
        mid = s.mid if s.mid is not None else s.adjacency
        with np.errstate(invalid="ignore"):
            severe = np.nan_to_num(s.hostility, nan=0.0) >= config.fatal_threshold
        fatal = mid & severe
        all_slices.append(replace(s, adjacency=_frozen(np.array(mid, dtype=bool))))
        fatal_slices.append(replace(s, adjacency=_frozen(fatal)))
    return (
        replace(panel, slices=tuple(all_slices), network="all_mid"),
        replace(panel, slices=tuple(fatal_slices), network="fatal"),
    )


def derive_peace_years(
    all_mid_panel: TemporalNetworkPanel, cap: int | None = None, *, clock: str = "contemporaneous"
) -> dict[int, dict[str, np.ndarray]]:
    """Peace-year clocks per dyad-year with squared and cubed columns.

    The contemporaneous clock is 0 in the first year of continuous joint
    membership and in any MID year, otherwise the previous year's value plus
    one. A break in joint membership (or a gap between panel years) restarts
    the clock.

    ``clock="prior"`` reports, for year ``y``, the contemporaneous clock of
    year ``y - 1`` (0 when the dyad was not jointly in system then). It counts
    peaceful years strictly before ``y`` and so does not depend on the year's
    own tie, which keeps it usable as a regressor for that tie.
    """
    if clock not in PEACE_CLOCKS:
        raise ValidationError(f"unknown peace clock {clock!r}")
    clock_kind = clock
    states = sorted({sid for s in all_mid_panel for sid in s.roster}, key=id_key)
    gpos = {sid: k for k, sid in enumerate(states)}
    g = len(states)
    clock = np.zeros((g, g))
    prev_joint = np.zeros((g, g), dtype=bool)
    prev_year = None
    out = {}
    for s in all_mid_panel:
        idx = np.array([gpos[sid] for sid in s.roster], dtype=int)
        joint = np.zeros((g, g), dtype=bool)
        joint[np.ix_(idx, idx)] = True
        np.fill_diagonal(joint, False)
        continuing = joint & prev_joint if prev_year is not None and s.year == prev_year + 1 else np.zeros_like(joint)
        new_clock = np.where(continuing, clock + 1, 0.0)
        before = np.where(continuing, clock, 0.0)
        sub = np.ix_(idx, idx)
        block = new_clock[sub]
        block[s.adjacency] = 0.0
        new_clock[sub] = block
        new_clock[~joint] = 0.0
        clock, prev_joint, prev_year = new_clock, joint, s.year
        py = (clock if clock_kind == "contemporaneous" else before)[sub].copy()
        if cap is not None:
            py = np.minimum(py, cap)
        np.fill_diagonal(py, np.nan)
        out[s.year] = {"peace_years": py, "peace_years_sq": py**2, "peace_years_cu": py**3}
    return out


def derive_capability_covariates(panel: TemporalNetworkPanel) -> dict[int, dict[str, np.ndarray]]:
    out = {}
    for s in panel:
        a = s.cinc[:, None]
        b = s.cinc[None, :]
        high = np.maximum(a, b)
        total = a + b
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(total > 0, high / total, np.nan)
        np.fill_diagonal(ratio, np.nan)
        high = high.copy()
        np.fill_diagonal(high, np.nan)
        out[s.year] = {"cap_ratio": ratio, "cinc_high": high}
    return out


def derive_scale_covariate(panel: TemporalNetworkPanel) -> dict[int, float]:
    out = {}
    for s in panel:
        if s.n == 0:
            raise ValidationError(f"year {s.year} has an empty roster")
        out[s.year] = math.log(s.n)
    return out


def with_covariates(
    panel: TemporalNetworkPanel,
    dyad_covs: Mapping[int, Mapping[str, np.ndarray]] | None = None,
    year_covs: Mapping[str, Mapping[int, float]] | None = None,
) -> TemporalNetworkPanel:
    """Return a copy of ``panel`` with extra dyadic / yearly covariates attached."""
    slices = []
    for s in panel:
        dc = dict(s.dyad_cov)
        for name, m in (dyad_covs or {}).get(s.year, {}).items():
            m = np.asarray(m, dtype=float)
            if m.shape != (s.n, s.n):
                raise ValidationError(f"covariate {name!r} year {s.year}: wrong shape {m.shape}")
            dc[name] = _frozen(m.copy())
        yc = dict(s.year_cov)
        for name, per_year in (year_covs or {}).items():
            if s.year in per_year:
                yc[name] = float(per_year[s.year])
        slices.append(replace(s, dyad_cov=dc, year_cov=yc))
    return replace(panel, slices=tuple(slices))


def prepare_networks(
    panel: TemporalNetworkPanel, config: PanelDeriveConfig | None = None
) -> dict[str, TemporalNetworkPanel]:
    """All-MID and fatal networks with every derived covariate attached."""
    config = config or PanelDeriveConfig()
    all_mid, fatal = derive_networks(panel, config)
    peace = derive_peace_years(all_mid, config.peace_year_cap, clock=config.peace_clock)
    caps = derive_capability_covariates(all_mid)
    dyad = {y: {**peace[y], **caps[y]} for y in all_mid.years}
    year = {"ln_states": derive_scale_covariate(all_mid)}
    return {
        "all_mid": with_covariates(all_mid, dyad, year),
        "fatal": with_covariates(fatal, dyad, year),
    }


# ---------------------------------------------------------------------------
# Synthetic panels
# ---------------------------------------------------------------------------


class DegeneracyWarning(UserWarning):
    """Simulated networks are (nearly) empty or complete."""


def synthetic_attributes(
    n_nodes: int,
    rng: np.random.Generator,
    regime_mix: Sequence[float] = (0.4, 0.2, 0.4),
):
    """Draw polity, capability, contiguity and alliance attributes.

    ``regime_mix`` gives the shares of democracies (polity 7..10), anocracies
    (-6..6) and autocracies (-10..-7).
    """
    mix = np.asarray(regime_mix, dtype=float)
    mix = mix / mix.sum()
    kind = rng.choice(3, size=n_nodes, p=mix)
    polity = np.where(
        kind == 0,
        rng.integers(7, 11, size=n_nodes),
        np.where(kind == 1, rng.integers(-6, 7, size=n_nodes), rng.integers(-10, -6, size=n_nodes)),
    ).astype(float)
    cinc = rng.gamma(0.6, size=n_nodes)
    cinc = cinc / cinc.sum()
    iu = np.triu_indices(n_nodes, 1)
    contiguity = np.zeros((n_nodes, n_nodes))
    contiguity[iu] = rng.choice(7, size=len(iu[0]), p=[0.7, 0.1, 0.05, 0.05, 0.04, 0.03, 0.03])
    contiguity = contiguity + contiguity.T
    alliance = np.zeros((n_nodes, n_nodes))
    alliance[iu] = rng.choice(4, size=len(iu[0]), p=[0.8, 0.08, 0.07, 0.05])
    alliance = alliance + alliance.T
    np.fill_diagonal(contiguity, np.nan)
    np.fill_diagonal(alliance, np.nan)
    return polity, cinc, contiguity, alliance


def generate_synthetic_panel(
    n_nodes: int,
    n_years: int,
    theta,
    model,
    seed: int,
    *,
    start_year: int = 1,
    regime_mix: Sequence[float] = (0.4, 0.2, 0.4),
    config: PanelDeriveConfig | None = None,
    sampler=None,
) -> TemporalNetworkPanel:
    """Simulate a panel whose yearly networks are ERGM draws at ``theta``.

    Node attributes and dyadic covariates are held fixed across years, so the
    yearly networks are successive thinned states of one Metropolis chain.
    Each MID edge gets a hostility level uniform on 2..5; all dyads are
    recorded, so the panel exports to complete CSVs.
    """
    from .simulate import SamplerConfig, run_chain
    from .stats import ModelSpec

    if n_nodes < 2:
        raise ValidationError("n_nodes must be at least 2")
    if n_years < 1:
        raise ValidationError("n_years must be at least 1")
    config = config or PanelDeriveConfig()
    model = ModelSpec.coerce(model)
    for term in model:
        if term.kind == "dyad_cov" and term.params["name"].startswith("peace_years"):
            raise ValidationError("peace-year terms depend on network history and cannot drive the generator")
    ss = np.random.SeedSequence(seed)
    attr_seed, chain_seed, host_seed = ss.spawn(3)
    rng = np.random.default_rng(attr_seed)
    polity, cinc, contiguity, alliance = synthetic_attributes(n_nodes, rng, regime_mix)
    roster = tuple(str(k + 1) for k in range(n_nodes))
    labels = regime_labels(polity, config)
    a, b = cinc[:, None], cinc[None, :]
    cap_ratio = np.maximum(a, b) / (a + b)
    cinc_high = np.maximum(a, b)
    np.fill_diagonal(cap_ratio, np.nan)
    np.fill_diagonal(cinc_high, np.nan)
    empty = np.zeros((n_nodes, n_nodes), dtype=bool)
    template = YearSlice(
        year=start_year,
        roster=roster,
        adjacency=_frozen(empty.copy()),
        polity=_frozen(polity),
        cinc=_frozen(cinc),
        labels=labels,
        dyad_cov={
            "contiguity": _frozen(contiguity),
            "alliance": _frozen(alliance),
            "cap_ratio": _frozen(cap_ratio),
            "cinc_high": _frozen(cinc_high),
        },
        year_cov={"ln_states": math.log(n_nodes)},
    )
    m = n_nodes * (n_nodes - 1) // 2
    if sampler is None:
        sampler = SamplerConfig(burn_in=20 * m, thin=5 * m, n_draws=n_years, seed=0, init="empty")
    sampler = replace(sampler, n_draws=n_years, seed=int(chain_seed.generate_state(1)[0]))
    draws = run_chain(theta, model, template, sampler).draws
    density = float(np.mean([np.triu(d, 1).sum() / m for d in draws]))
    if not 0.01 <= density <= 0.99:
        warnings.warn(
            f"synthetic panel is degenerate: realized mean density {density:.4f}",
            DegeneracyWarning,
            stacklevel=2,
        )
    hrng = np.random.default_rng(host_seed)
    slices = []
    for t, adj in enumerate(draws):
        host = np.full((n_nodes, n_nodes), np.nan)
        iu = np.triu_indices(n_nodes, 1)
        levels = hrng.integers(2, 6, size=len(iu[0])).astype(float)
        upper = np.where(adj[iu], levels, np.nan)
        host[iu] = upper
        host.T[iu] = upper
        recorded = ~np.eye(n_nodes, dtype=bool)
        slices.append(
            replace(
                template,
                year=start_year + t,
                adjacency=_frozen(adj.copy()),
                mid=_frozen(adj.copy()),
                hostility=_frozen(host),
                recorded=_frozen(recorded),
            )
        )
    return TemporalNetworkPanel(tuple(slices))
