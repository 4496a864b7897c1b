import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conflictnet import _kernel
from conflictnet.errors import ModelSpecError
from conflictnet.netdata import PanelDeriveConfig, TemporalNetworkPanel, make_slice
from conflictnet.simulate import _compile
from conflictnet.stats import (
    ModelSpec,
    TermSpec,
    build_design_matrix,
    change_matrix,
    change_statistic,
    full_statistic,
    preset,
    regime_indicators,
    yearly_feature_counts,
)

from oracles import brute_statistic, random_case

ALL_TERMS = [
    TermSpec("edges"),
    TermSpec("isolates"),
    TermSpec("degree", {"k": 0}),
    TermSpec("degree", {"k": 2}),
    TermSpec("mixed_two_star", {"same_type": "dem"}),
    TermSpec("mixed_two_star", {"same_type": "aut"}),
    TermSpec("mixed_triangle", {"same_type": "dem"}),
    TermSpec("mixed_triangle", {"same_type": "aut"}),
    TermSpec("gwesp", {"decay": 0.5}),
    TermSpec("gwesp", {"decay": 1.3}),
    TermSpec("dyad_cov", {"name": "z"}),
    TermSpec("dyad_cov", {"name": "contiguity"}),
    TermSpec("year_cov", {"name": "ln_states"}),
    TermSpec("joint_indicator", {"regime": "dem"}),
    TermSpec("joint_indicator", {"regime": "aut"}),
    TermSpec("weak_link"),
]

DAD = [8.0, -8.0, 8.0]  # democracy, autocracy, democracy


def _lists(adj):
    return [[int(v) for v in row] for row in np.asarray(adj)]


def _brute(term, slc, adj):
    covs = {k: np.asarray(v).tolist() for k, v in slc.dyad_cov.items()}
    return brute_statistic(term, _lists(adj), list(slc.polity), covs, slc.year_cov)


# -- regime indicators ------------------------------------------------------


@pytest.mark.parametrize(
    "polity, expected",
    [(7, (1, 0)), (-8, (0, 1)), (3, (0, 0)), (6, (0, 0)), (-6, (0, 0)), (10, (1, 0)), (-10, (0, 1))],
)
def test_regime_indicators(polity, expected):
    assert regime_indicators(polity, PanelDeriveConfig()) == expected


def test_regime_indicators_missing():
    assert regime_indicators(None, PanelDeriveConfig()) == (None, None)
    assert regime_indicators(float("nan"), PanelDeriveConfig()) == (None, None)


@given(st.integers(-10, 10))
def test_regime_indicators_exclusive(p):
    dem, aut = regime_indicators(p, PanelDeriveConfig())
    assert not (dem and aut)


# -- full statistics on hand-built graphs -----------------------------------


def test_dad_path():
    slc = make_slice([[0, 1, 0], [1, 0, 1], [0, 1, 0]], DAD)
    assert full_statistic(TermSpec("mixed_two_star", {"same_type": "dem"}), slc) == 1
    assert full_statistic(TermSpec("mixed_triangle", {"same_type": "dem"}), slc) == 0
    assert full_statistic(TermSpec("mixed_two_star", {"same_type": "aut"}), slc) == 0


def test_dad_triangle():
    slc = make_slice(np.ones((3, 3)) - np.eye(3), DAD)
    assert full_statistic(TermSpec("mixed_triangle", {"same_type": "dem"}), slc) == 1
    assert full_statistic(TermSpec("edges"), slc) == 3
    # each edge has one shared partner: e^a (1 - (1 - e^-a)) = 1 per edge
    assert full_statistic(TermSpec("gwesp", {"decay": 0.5}), slc) == pytest.approx(3.0, abs=1e-12)


def test_empty_graph():
    slc = make_slice(np.zeros((4, 4)), [8, -8, 8, 0])
    assert full_statistic(TermSpec("isolates"), slc) == 4
    for term in ALL_TERMS[4:10]:
        assert full_statistic(term, slc) == 0, term


def test_change_statistic_examples():
    empty3 = make_slice(np.zeros((3, 3)), DAD)
    assert change_statistic(TermSpec("edges"), empty3, 0, 1) == 1
    assert change_statistic(TermSpec("isolates"), empty3, 0, 1) == -2
    path = make_slice([[0, 1, 0], [1, 0, 1], [0, 1, 0]], DAD)
    assert change_statistic(TermSpec("mixed_triangle", {"same_type": "dem"}), path, 0, 2) == 1


def test_missing_label_counter():
    slc = make_slice([[0, 1, 0], [1, 0, 1], [0, 1, 0]], [8.0, np.nan, 8.0])
    counter = Counter()
    assert full_statistic(TermSpec("mixed_two_star", {"same_type": "dem"}), slc, counter=counter) == 0
    assert counter["missing_label"] == 1


# -- oracle equivalence ------------------------------------------------------


def _check_all_dyads(slc, terms):
    n = slc.n
    A = np.asarray(slc.adjacency)
    kinds, iparam, fparam, tvec, ovec, cov, fixed = _compile(ModelSpec(terms), slc)
    deg = A.sum(axis=1).astype(np.int64)
    kdelta = np.zeros(len(terms))
    matrices = [change_matrix(t, slc) for t in terms]
    for i in range(n):
        for j in range(i + 1, n):
            plus, minus = A.copy(), A.copy()
            plus[i, j] = plus[j, i] = True
            minus[i, j] = minus[j, i] = False
            _kernel._delta(A.astype(np.int8), deg, i, j, kinds, iparam, fparam, tvec, ovec, cov, kdelta)
            for t, term in enumerate(terms):
                expected = _brute(term, slc, plus) - _brute(term, slc, minus)
                local = change_statistic(term, slc, i, j)
                if math.isnan(local):
                    assert math.isnan(matrices[t][i, j]) and fixed[i, j]
                    continue
                tol = 1e-12 if term.kind == "gwesp" else 0.0
                assert abs(local - expected) <= tol, (term, i, j, local, expected)
                assert abs(matrices[t][i, j] - expected) <= tol, (term, i, j)
                assert abs(matrices[t][j, i] - expected) <= tol
                assert abs(kdelta[t] - expected) <= tol, (term, i, j, kdelta[t], expected)


def test_change_statistics_match_full_difference():
    rng = np.random.default_rng(20240611)
    for _ in range(100):
        _check_all_dyads(random_case(rng), ALL_TERMS)


def test_full_statistic_matches_brute_force():
    rng = np.random.default_rng(7)
    for _ in range(60):
        slc = random_case(rng, missing_labels=False)
        for term in ALL_TERMS:
            assert full_statistic(term, slc) == pytest.approx(_brute(term, slc, slc.adjacency), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_label_swap_symmetry(seed):
    slc = random_case(np.random.default_rng(seed))
    swapped = make_slice(slc.adjacency, -np.asarray(slc.polity))
    dem = TermSpec("mixed_two_star", {"same_type": "dem"})
    aut = TermSpec("mixed_two_star", {"same_type": "aut"})
    assert full_statistic(dem, slc) == full_statistic(aut, swapped)
    assert full_statistic(aut, slc) == full_statistic(dem, swapped)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_triangle_bounded_by_two_star(seed):
    slc = random_case(np.random.default_rng(seed))
    for s in ("dem", "aut"):
        tri = full_statistic(TermSpec("mixed_triangle", {"same_type": s}), slc)
        two = full_statistic(TermSpec("mixed_two_star", {"same_type": s}), slc)
        assert tri <= two


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    slc = random_case(rng, missing_labels=False)
    perm = rng.permutation(slc.n)
    A = np.asarray(slc.adjacency)[np.ix_(perm, perm)]
    covs = {k: np.asarray(v)[np.ix_(perm, perm)] for k, v in slc.dyad_cov.items()}
    other = make_slice(A, np.asarray(slc.polity)[perm], dyad_cov=covs, year_cov=slc.year_cov)
    for term in ALL_TERMS:
        assert full_statistic(term, other) == pytest.approx(full_statistic(term, slc), abs=1e-9)


# -- model specs --------------------------------------------------------------


def test_modelspec_json_roundtrip():
    spec = ModelSpec.loads('[{"term": "edges"}, {"term": "mixed_two_star", "same_type": "dem"}, {"term": "gwesp"}]')
    assert spec.names == ("edges", "mixed_two_star.dem", "gwesp.0.5")
    assert ModelSpec.loads(spec.dumps()).names == spec.names


def test_modelspec_rejects_bad_terms():
    with pytest.raises(ModelSpecError):
        ModelSpec([{"term": "edges"}, {"term": "edges"}])
    with pytest.raises(ModelSpecError):
        TermSpec("gwesp", {"decay": 0})
    with pytest.raises(ModelSpecError):
        TermSpec("mixed_two_star", {"same_type": "anoc"})
    with pytest.raises(ModelSpecError):
        TermSpec("banana")
    with pytest.raises(ModelSpecError):
        ModelSpec([])


def test_presets():
    assert "gwesp.0.5" in preset("model2").names
    assert "mixed_triangle.aut" in preset("model3").names
    assert "weak_link" in preset("model4").names
    assert not any(n.startswith("mixed") for n in preset("model1").names)
    assert preset("model1").has_network_terms  # isolates


# -- design matrices ----------------------------------------------------------


def _panel(*slices):
    return TemporalNetworkPanel(tuple(slices))


def test_design_three_nodes():
    slc = make_slice([[0, 1, 0], [1, 0, 0], [0, 0, 0]], DAD, dyad_cov={"alliance": np.zeros((3, 3))})
    dm = build_design_matrix(_panel(slc), ModelSpec([{"term": "edges"}, {"term": "dyad_cov", "name": "alliance"}]))
    assert dm.n_rows == 3 and dm.n_excluded == 0
    assert list(dm.y) == [1, 0, 0]


def test_design_listwise_deletion():
    alliance = np.zeros((3, 3))
    alliance[0, 2] = alliance[2, 0] = np.nan
    slc = make_slice(np.zeros((3, 3)), DAD, dyad_cov={"alliance": alliance})
    dm = build_design_matrix(_panel(slc), ModelSpec([{"term": "edges"}, {"term": "dyad_cov", "name": "alliance"}]))
    assert dm.n_rows == 2 and dm.n_excluded == 1


def test_design_pooling_edges_only():
    a = make_slice(np.zeros((3, 3)), DAD, year=1)
    b = make_slice([[0, 1, 1], [1, 0, 0], [1, 0, 0]], DAD, year=2)
    dm = build_design_matrix(_panel(a, b), ModelSpec([{"term": "edges"}]))
    assert dm.n_rows == 6
    assert np.all(dm.X[:, 0] == 1)
    assert list(dm.year) == [1, 1, 1, 2, 2, 2]


def test_design_clamps_focal_dyad():
    tri = make_slice(np.ones((3, 3)) - np.eye(3), DAD)
    dm = build_design_matrix(_panel(tri), ModelSpec([{"term": "edges"}, {"term": "mixed_triangle", "same_type": "dem"}]))
    # with its own tie removed, every edge of the D-A-D triangle is the one that closes it
    assert list(dm.X[:, 1]) == [1, 1, 1]


def test_design_determinism():
    rng = np.random.default_rng(3)
    slices = [random_case(rng, n=6, missing_labels=False) for _ in range(3)]
    slices = [make_slice(s.adjacency, s.polity, year=k, dyad_cov=s.dyad_cov, year_cov=s.year_cov) for k, s in enumerate(slices)]
    model = ModelSpec([t.to_json() for t in ALL_TERMS])
    a = build_design_matrix(_panel(*slices), model)
    b = build_design_matrix(_panel(*slices), model)
    assert a.X.tobytes() == b.X.tobytes() and a.y.tobytes() == b.y.tobytes()


def test_design_requires_edges():
    with pytest.raises(ModelSpecError):
        build_design_matrix(_panel(make_slice(np.zeros((3, 3)), DAD)), ModelSpec([{"term": "isolates"}]))


# -- yearly feature counts ----------------------------------------------------


def _counts(slc):
    return {f: c for _, f, c in yearly_feature_counts(_panel(slc))}


def test_feature_counts_path():
    c = _counts(make_slice([[0, 1, 0], [1, 0, 1], [0, 1, 0]], DAD))
    assert c == {"joint_dem_edges": 0, "joint_aut_edges": 0, "mixed_edges": 2, "mixed_two_stars": 1, "mixed_triangles": 0}


def test_feature_counts_empty():
    assert set(_counts(make_slice(np.zeros((3, 3)), DAD)).values()) == {0}


def test_feature_counts_triangle():
    c = _counts(make_slice(np.ones((3, 3)) - np.eye(3), DAD))
    assert c == {"joint_dem_edges": 1, "joint_aut_edges": 0, "mixed_edges": 2, "mixed_two_stars": 1, "mixed_triangles": 1}
