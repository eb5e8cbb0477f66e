import math

import numpy as np
import pytest

from gfflab.graph import DomainMask, WeightedGraph, build_lattice_box
from gfflab.potential import (GreenOperator, RecurrentDomainError, capacity,
                              capacity_scaling_scan, capacity_variational,
                              equilibrium_measure, hitting_probability,
                              hitting_vector, mixture_capacity_bound,
                              tube_capacity)


@pytest.fixture
def path_domain():
    g = WeightedGraph(4, np.array([0, 1, 2]), np.array([1, 2, 3]), np.ones(3))
    return GreenOperator(DomainMask.from_vertices(g, [1, 2]))


def test_green_hand_values(path_domain):
    # U = {1, 2} on the 4-path: g(1,1) = g(2,2) = 2/3, g(1,2) = 1/3
    assert path_domain.green(1, 1) == pytest.approx(2 / 3, abs=1e-12)
    assert path_domain.green(2, 2) == pytest.approx(2 / 3, abs=1e-12)
    assert path_domain.green(1, 2) == pytest.approx(1 / 3, abs=1e-12)


def test_green_symmetry_small_box():
    g, dom = build_lattice_box(2, 4)
    gop = GreenOperator(dom)
    G = gop.green_matrix(np.arange(g.n))
    assert np.allclose(G, G.T, atol=1e-12)
    # positive definite covariance
    assert np.linalg.eigvalsh(G).min() > 0


def test_recurrent_domain_rejected():
    g = WeightedGraph(3, np.array([0, 1]), np.array([1, 2]), np.ones(2))
    with pytest.raises(RecurrentDomainError):
        GreenOperator(DomainMask.full(g))


def test_hitting_and_equilibrium(path_domain):
    # from vertex 1, hit {2} before leaving U: probability 1/2
    assert hitting_probability(path_domain, [2], 1) == pytest.approx(0.5, abs=1e-12)
    em = equilibrium_measure(path_domain, [1, 2])
    assert em.masses.tolist() == pytest.approx([1.0, 1.0], abs=1e-12)
    assert em.capacity == pytest.approx(2.0, abs=1e-12)


def test_last_exit_identity(path_domain):
    K = np.array([2])
    em = equilibrium_measure(path_domain, K)
    h = hitting_vector(path_domain, K)
    G = np.column_stack([path_domain.green_column(int(y)) for y in em.K])
    assert np.abs(G @ em.masses - h).max() < 1e-10


def test_variational_matches_equilibrium(path_domain):
    assert capacity_variational(path_domain, [1, 2]) == pytest.approx(2.0, rel=1e-9)
    # singleton: cap({1}) = 1 / g(1,1) = 3/2
    assert capacity_variational(path_domain, [1]) == pytest.approx(1.5, rel=1e-9)
    assert capacity(path_domain, [1]) == pytest.approx(1.5, rel=1e-9)


def test_capacity_monotone_in_set():
    g, dom = build_lattice_box(3, 8)
    gop = GreenOperator(dom)
    c1 = capacity(gop, [0])
    c2 = capacity(gop, [0, 1])
    c3 = capacity(gop, [0, 1, 2])
    assert c1 < c2 < c3


def test_mixture_bound_dominates():
    g, dom = build_lattice_box(3, 8)
    gop = GreenOperator(dom)
    sets = [np.array([0]), np.array([100]), np.array([200])]
    bound = mixture_capacity_bound(gop, sets)
    exact = capacity(gop, np.array([0, 100, 200]))
    # the mixture evaluates the variational form at a feasible point
    assert bound <= exact + 1e-9


def test_cg_matches_dense():
    g, dom = build_lattice_box(2, 8)
    dense = GreenOperator(dom)
    iterative = GreenOperator(dom, dense_limit=1)
    for y in (0, 17, 63):
        assert np.allclose(dense.green_column(y), iterative.green_column(y),
                           atol=1e-8)


def test_capacity_scaling_slope():
    out = capacity_scaling_scan(3, [2, 3, 4], side=32)
    assert 0.7 <= out["slope"] <= 1.3


def test_tube_capacity_asymptotic():
    # slow log convergence: expect the mass-normalized ratio near 1 from above
    near = tube_capacity(side=40, R=12, ell=2)["mass_normalized_ratio"]
    far = tube_capacity(side=56, R=18, ell=2)["mass_normalized_ratio"]
    assert 1.0 < far < near < 2.0


def test_green_matches_spectral_oracle():
    from gfflab.field import SpectralSampler
    g, dom = build_lattice_box(2, 5)
    G1 = GreenOperator(dom).green_matrix(np.arange(g.n))
    G2 = SpectralSampler(g).green_matrix_exact()
    assert np.abs(G1 - G2).max() < 1e-10
