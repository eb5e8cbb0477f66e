import numpy as np
import pytest

from gfflab.field import (DenseSampler, FieldSample, SpectralSampler,
                          bond_config, open_probabilities, sample_open_edges)
from gfflab.graph import DomainMask, GraphError, WeightedGraph, build_lattice_box
from gfflab.potential import GreenOperator
from gfflab.streams import stream


def test_dense_sampler_covariance():
    g, dom = build_lattice_box(1, 3)
    gop = GreenOperator(dom)
    phi = DenseSampler(gop).sample(stream(1, 0, "field"), size=60000)
    emp = np.cov(phi.T)
    exact = gop.green_matrix(np.arange(3))
    assert np.abs(emp - exact).max() < 0.02


def test_spectral_matches_dense_law():
    g, dom = build_lattice_box(2, 4)
    exact = GreenOperator(dom).green_matrix(np.arange(g.n))
    phi = SpectralSampler(g).sample(stream(2, 0, "field"), size=40000)
    emp_var = phi.var(axis=0)
    assert np.abs(emp_var - np.diag(exact)).max() < 0.03


def test_spectral_single_site_variance():
    # one vertex, mass 2: variance 1/2
    g, _ = build_lattice_box(1, 1)
    phi = SpectralSampler(g).sample(stream(3, 0, "field"), size=200000)
    assert phi.var() == pytest.approx(0.5, abs=0.01)


def test_spectral_rejects_non_boxes():
    g = WeightedGraph(3, np.array([0, 1]), np.array([1, 2]), np.ones(2),
                      kill=np.ones(3))
    with pytest.raises(GraphError):
        SpectralSampler(g)


def test_open_probabilities_zero_below_level():
    g, _ = build_lattice_box(1, 4)
    values = np.array([-1.0, 2.0, 3.0, -0.5])
    p = open_probabilities(g, values, 0.0)
    assert p[0] == 0.0            # edge (0,1): one endpoint negative
    assert p[1] == pytest.approx(1 - np.exp(-12.0))
    assert p[2] == 0.0


def test_bond_config_monotone_in_level():
    g, _ = build_lattice_box(2, 6)
    values = SpectralSampler(g).sample(stream(4, 0, "field"))
    uniforms = stream(4, 0, "edges").random(g.m)
    fs = FieldSample(DomainMask.full(g), values)
    lower = bond_config(g, fs, -0.3, uniforms=uniforms)
    upper = bond_config(g, fs, 0.3, uniforms=uniforms)
    assert not np.any(upper.open & ~lower.open)


def test_sample_open_edges_law():
    # empirical opening frequency of a fixed edge matches its probability
    g, _ = build_lattice_box(1, 3)
    values = np.array([1.0, 0.7, -2.0])
    p = open_probabilities(g, values, 0.0)[0]
    n = 40000
    hits = sum(0 in sample_open_edges(g, values, 0.0, stream(5, i, "edges"))
               for i in range(n))
    se = np.sqrt(p * (1 - p) / n)
    assert abs(hits / n - p) < 4 * se


def test_streams_are_reproducible_and_disjoint():
    a = stream(7, 3, "field").standard_normal(5)
    b = stream(7, 3, "field").standard_normal(5)
    c = stream(7, 4, "field").standard_normal(5)
    d = stream(7, 3, "edges").standard_normal(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)
