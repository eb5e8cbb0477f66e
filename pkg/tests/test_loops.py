import numpy as np
import pytest

from gfflab.graph import DomainMask, GraphError, WeightedGraph, build_lattice_box
from gfflab.loops import (DiscreteLoop, LoopMeasure, bad_annuli_count,
                          big_loop_threshold, build_annuli_schema,
                          classify_loops, loop_clusters, loop_mass_by_length,
                          loop_mass_crossing, restriction_property_test,
                          sample_loop_ensemble, sample_loop_soup, verify_annuli)
from gfflab.potential import GreenOperator
from gfflab.streams import stream


@pytest.fixture
def two_state():
    g = WeightedGraph(4, np.array([0, 1, 2]), np.array([1, 2, 3]), np.ones(3))
    return DomainMask.from_vertices(g, [1, 2])


def test_hand_masses(two_state):
    res = loop_mass_by_length(two_state, 12)
    m = res["masses"]
    assert m[2] == pytest.approx(0.25, abs=1e-12)
    assert m[3] == 0.0
    assert m[4] == pytest.approx(1 / 32, abs=1e-12)
    # closed form: -log det(I - P) = -log(3/4)
    assert res["total"] == pytest.approx(-np.log(0.75), abs=1e-12)
    assert res["tail"] == pytest.approx(res["total"] - m.sum(), abs=1e-14)
    assert res["tail"] < 2e-5


def test_trace_sums_converge_to_logdet():
    g, dom = build_lattice_box(2, 4)
    lm = LoopMeasure(dom, 80)
    assert lm.tail >= 0
    assert lm.masses.sum() == pytest.approx(lm.total_mass, abs=1e-6)


def test_bridge_paths_are_loops(two_state):
    lm = LoopMeasure(two_state, 8)
    _, by_len = sample_loop_ensemble(lm, 1.0, 3000, stream(1, 0, "soup"))
    for n, (paths, soup) in by_len.items():
        assert paths.shape[1] == n
        # consecutive states are neighbors; the endpoint closes to the root
        assert set(np.unique(paths)) <= {1, 2}
        assert np.all(paths[:, :-1] != paths[:, 1:])


def test_poisson_counts(two_state):
    res = loop_mass_by_length(two_state, 8)
    lm = res["measure"]
    counts, _ = sample_loop_ensemble(lm, 0.5, 50000, stream(2, 0, "soup"))
    for n in (2, 4, 6):
        m = 0.5 * lm.masses[n]
        z = abs(counts[:, n].mean() - m) / np.sqrt(m / 50000)
        assert z < 4.0
    assert counts[:, 3].sum() == 0  # bipartite: no odd loops


def test_soup_sampler_tail_guard(two_state):
    with pytest.raises(GraphError):
        sample_loop_soup(two_state, 0.5, 2, stream(0, 0, "soup"),
                         tail_budget=1e-12)
    soup = sample_loop_soup(two_state, 0.5, 30, stream(0, 0, "soup"))
    assert all(isinstance(l, DiscreteLoop) for l in soup.loops)


def test_crossing_mass_exact(two_state):
    # every loop in U = {1, 2} longer than 1 hits both points
    total = -np.log(0.75)
    assert loop_mass_crossing(two_state, [1], [2]) == pytest.approx(total, abs=1e-12)
    assert loop_mass_crossing(two_state, [1], [2], n_max=40) == pytest.approx(
        total, abs=1e-6)
    with pytest.raises(GraphError):
        loop_mass_crossing(two_state, [1], [1, 2])


def test_crossing_mass_vs_sampler():
    g, dom = build_lattice_box(2, 3)
    K, M = [0], [8]
    mass = loop_mass_crossing(dom, K, M, n_max=40)
    lm = LoopMeasure(dom, 40)
    n = 20000
    _, by_len = sample_loop_ensemble(lm, 0.5, n, stream(3, 0, "soup"))
    crossed = np.zeros(n, dtype=bool)
    for ln, (paths, soup) in by_len.items():
        c = np.isin(paths, K).any(axis=1) & np.isin(paths, M).any(axis=1)
        crossed[soup[c]] = True
    target = 1 - np.exp(-0.5 * mass)
    se = np.sqrt(target * (1 - target) / n)
    assert abs(crossed.mean() - target) < 4 * se


def test_restriction_property():
    g, _ = build_lattice_box(2, 6)
    dom = DomainMask.from_vertices(g, list(range(20)))
    sub = DomainMask.from_vertices(g, list(range(10)))
    rows = restriction_property_test(dom, sub, 0.5, 8, 8000, seed=7)
    for r in rows:
        assert abs(r["z_mass"]) < 4.0
        assert abs(r["z_pair"]) < 4.0


def test_loop_clusters_union_find():
    loops = [DiscreteLoop([0, 1]), DiscreteLoop([1, 2]), DiscreteLoop([5, 6]),
             DiscreteLoop([2, 3])]
    verts, members = loop_clusters(loops, 0)
    assert verts.tolist() == [0, 1, 2, 3]
    assert members == [0, 1, 3]
    verts, members = loop_clusters(loops, 9)
    assert verts.size == 0 and members == []


def _path_graph(n):
    return WeightedGraph(n, np.arange(n - 1), np.arange(1, n), np.ones(n - 1))


def test_annuli_schema_geometry():
    g = _path_graph(44)
    sch = build_annuli_schema(g, L=2, ell=2, base=0, C=5)
    assert sch.R == 30
    verify_annuli(sch)
    assert sch.site_families[0].tolist() == [8, 10, 12]
    assert sch.site_families[1].tolist() == [18, 20, 22]


def test_annuli_window_guard():
    g = _path_graph(20)
    with pytest.raises(GraphError):
        build_annuli_schema(g, L=2, ell=2, base=0, C=5)


def test_big_loop_threshold():
    assert big_loop_threshold(0.5, 4, 1.0, 0) == pytest.approx(2.0)
    assert big_loop_threshold(0.5, 4, 1.0, 1) == pytest.approx(
        2.0 / np.log(4.0))


def test_bad_annuli_statistic():
    g = _path_graph(44)
    sch = build_annuli_schema(g, L=2, ell=2, base=0, C=5)
    gop = GreenOperator(DomainMask.from_vertices(g, list(range(1, 43))))
    chain = [DiscreteLoop(list(range(i, i + 4))) for i in range(1, 40, 3)]
    all_big = classify_loops(chain, gop, delta=1e-9, L=2, nu=1.0, b2=0, schema=sch)
    assert bad_annuli_count(chain, sch, all_big, base=1) == 0
    none_big = classify_loops(chain, gop, delta=1e9, L=2, nu=1.0, b2=0, schema=sch)
    assert bad_annuli_count(chain, sch, none_big, base=1) == 2
    short = [DiscreteLoop(list(range(i, i + 4))) for i in range(1, 10, 3)]
    cls = classify_loops(short, gop, delta=1e9, L=2, nu=1.0, b2=0, schema=sch)
    assert bad_annuli_count(short, sch, cls, base=1) == 0
