import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gfflab.graph import (DomainMask, GraphError, WeightedGraph, ball,
                          build_lattice_box, build_packing, distances_from,
                          graph_distance, load_graph, verify_packing)


def path_graph(n, kill=None):
    return WeightedGraph(n, np.arange(n - 1), np.arange(1, n),
                         np.ones(n - 1), kill=kill)


def test_cube_counts():
    g, dom = build_lattice_box(3, 2)
    assert g.n == 8
    assert g.m == 12
    assert np.allclose(g.lam, 6.0)
    assert dom.size == 8


def test_box_halo_masses():
    # every vertex carries the full 2d mass; face vertices via kill
    g, _ = build_lattice_box(2, 4)
    assert np.allclose(g.lam, 4.0)
    assert g.kill.sum() > 0
    interior = (g.coords > 0).all(axis=1) & (g.coords < 3).all(axis=1)
    assert np.allclose(g.kill[interior], 0.0)


def test_box_row_major_coords():
    g, _ = build_lattice_box(2, 3)
    assert g.coords[5].tolist() == [1, 2]
    assert graph_distance(g, 0, 8) == 4


def test_rejects_bad_edges():
    with pytest.raises(GraphError):
        WeightedGraph(3, np.array([0]), np.array([0]), np.array([1.0]))
    with pytest.raises(GraphError):
        WeightedGraph(3, np.array([0]), np.array([1]), np.array([-1.0]))


def test_load_graph_roundtrip(tmp_path):
    p = tmp_path / "g.txt"
    p.write_text("# comment\n0 1 1.5\n1 2 2.0\n")
    g = load_graph(p)
    assert g.n == 3 and g.m == 2
    assert g.edge_w.tolist() == [1.5, 2.0]


@pytest.mark.parametrize("body,code", [
    ("0 1 1.0\n1 0 1.0\n", "duplicate_edge"),
    ("0 1 1.0\n1 0 2.0\n", "asymmetric"),
    ("0 0 1.0\n", "self_edge"),
    ("0 1 0\n", "nonpositive_weight"),
    ("0 1\n", "bad_line"),
    ("0 1 1.0\n2 3 1.0\n", "disconnected"),
])
def test_load_graph_errors(tmp_path, body, code):
    p = tmp_path / "g.txt"
    p.write_text(body)
    with pytest.raises(GraphError) as exc:
        load_graph(p)
    assert exc.value.code == code


def test_distances_and_balls():
    g = path_graph(7)
    d = distances_from(g, 3)
    assert d.tolist() == [3, 2, 1, 0, 1, 2, 3]
    assert ball(g, 3, 2).tolist() == [1, 2, 3, 4, 5]
    assert distances_from(g, 0, cutoff=2).tolist() == [0, 1, 2, -1, -1, -1, -1]


def test_controlled_weight_ratio():
    g = path_graph(3)
    # end vertices have lam 1, middle 2; worst ratio 1/2
    assert g.controlled_weight_ratio() == pytest.approx(0.5)


def test_packing_path_example():
    g = path_graph(9)
    pl = build_packing(g, 2, base=0)
    assert pl.sites.tolist() == [0, 2, 4, 6, 8]
    verify_packing(pl)


def test_packing_site_adjacency_symmetric():
    g, _ = build_lattice_box(2, 8)
    pl = build_packing(g, 3, base=0)
    for i in range(len(pl.sites)):
        for j in pl.neighbors(i):
            assert i in pl.neighbors(int(j))


@settings(max_examples=40, deadline=None)
@given(n=st.integers(3, 40), L=st.integers(2, 6))
def test_packing_invariants_on_paths(n, L):
    g = path_graph(n)
    pl = build_packing(g, L, base=0)
    verify_packing(pl)
    sites = pl.sites
    sep = L // 2 + 1
    for i in range(len(sites)):
        for j in range(i + 1, len(sites)):
            assert abs(int(sites[i]) - int(sites[j])) >= sep
    # L-balls around the sites cover the graph
    covered = np.zeros(n, dtype=bool)
    for y in sites:
        covered[ball(g, int(y), L)] = True
    assert covered.all()


def test_domain_mask_validation():
    g = path_graph(4)
    with pytest.raises(GraphError):
        DomainMask(g, np.zeros(4, dtype=bool))
    dom = DomainMask.from_vertices(g, [1, 2])
    assert dom.vertices.tolist() == [1, 2]
    assert dom.size == 2
