"""Cluster observables of the bond model: one-arm probabilities, truncated
two-point functions, the arcsin law check, and cluster capacity tails."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .field import SpectralSampler, sample_open_edges
from .fitting import fit_exponent
from .graph import GraphError, distances_from
from .potential import GreenOperator, box_center, equilibrium_measure
from .streams import stream


@dataclass
class ClusterLabels:
    labels: np.ndarray
    sizes: np.ndarray

    @property
    def ncomponents(self):
        return len(self.sizes)


def _component_labels(graph, open_idx):
    u = graph.edge_u[open_idx]
    v = graph.edge_v[open_idx]
    mat = sparse.csr_matrix((np.ones(len(u), dtype=bool), (u, v)),
                            shape=(graph.n, graph.n))
    _, labels = connected_components(mat, directed=False)
    return labels


def clusters(graph, config):
    """Union-find component labeling of the open-edge configuration."""
    open_idx = np.flatnonzero(config.open) if hasattr(config, "open") else np.asarray(config)
    labels = _component_labels(graph, open_idx)
    sizes = np.bincount(labels)
    return ClusterLabels(labels, sizes)


@dataclass
class ObservableEstimate:
    estimate: float
    n: int
    stderr: float
    seed: int

    @classmethod
    def from_bernoulli(cls, successes, n, seed):
        p = successes / n if n else float("nan")
        se = math.sqrt(p * (1 - p) / n) if n else float("nan")
        return cls(p, n, se, seed)


def _box_sampler(graph):
    if graph.shape is None:
        raise GraphError("not_a_box", "estimator needs a lattice box window")
    return SpectralSampler(graph)


def one_arm_estimate(graph, a, radii, samples, seed, fit=True):
    """Monte Carlo of P(0 <-> B(0,R)^c in E^{>=a}) for the window center, with a
    log-log fit of the decay exponent.  Zero-success radii are flagged and
    excluded from the fit."""
    radii = sorted(int(r) for r in radii)
    sampler = _box_sampler(graph)
    center = box_center(graph)
    dist = distances_from(graph, center)
    if max(radii) >= dist.max():
        raise GraphError("window_too_small",
                         f"R={max(radii)} leaves no vertices outside the ball")
    hits = np.zeros(len(radii), dtype=np.int64)
    rmax = np.asarray(radii)
    for i in range(samples):
        values = sampler.sample(stream(seed, i, "field"))
        open_idx = sample_open_edges(graph, values, a, stream(seed, i, "edges"))
        if open_idx.size == 0:
            continue
        labels = _component_labels(graph, open_idx)
        reach = dist[labels == labels[center]].max()
        hits += reach > rmax
    estimates = {r: ObservableEstimate.from_bernoulli(int(h), samples, seed)
                 for r, h in zip(radii, hits)}
    out = {"radii": radii, "estimates": estimates}
    if fit and samples > 0:
        try:
            out["fit"] = fit_exponent(radii, [estimates[r].estimate for r in radii])
        except ValueError:
            out["fit"] = None
    return out


def _boundary_mask(graph):
    return graph.kill > 0


def truncated_two_point(graph, a, x, y, samples, seed, _sampler=None):
    """P(x <-> y, cluster avoids the window boundary): the finite-volume proxy
    for the truncated two-point function."""
    sampler = _sampler if _sampler is not None else _box_sampler(graph)
    sep = int(distances_from(graph, x)[y])
    boundary = _boundary_mask(graph)
    bd = np.flatnonzero(boundary)
    for p, name in ((x, "x"), (y, "y")):
        margin = distances_from(graph, p)[bd].min() if bd.size else np.inf
        if margin < sep:
            raise GraphError("margin_violation", f"{name} within d(x,y) of the boundary")
    succ = 0
    for i in range(samples):
        values = sampler.sample(stream(seed, i, "field"))
        open_idx = sample_open_edges(graph, values, a, stream(seed, i, "edges"))
        labels = _component_labels(graph, open_idx)
        lab = labels[x]
        if labels[y] == lab and not np.any(labels[bd] == lab):
            succ += 1
    return ObservableEstimate.from_bernoulli(succ, samples, seed)


def arcsin_target(gop, x, y):
    gxy = gop.green(x, y)
    return math.asin(gxy / math.sqrt(gop.green(x, x) * gop.green(y, y))) / math.pi


def arcsin_validation(graph, pairs, samples, seed, gop=None, tol=1e-10):
    """Monte Carlo connectivity at level 0 against the arcsin formula
    (1/pi) arcsin(g(x,y)/sqrt(g(x,x) g(y,y))); emits per-pair z-scores."""
    sampler = _box_sampler(graph)
    if gop is None:
        from .graph import DomainMask
        gop = GreenOperator(DomainMask.full(graph), tol=tol)
    targets = [arcsin_target(gop, x, y) for x, y in pairs]
    succ = np.zeros(len(pairs), dtype=np.int64)
    for i in range(samples):
        values = sampler.sample(stream(seed, i, "field"))
        open_idx = sample_open_edges(graph, values, 0.0, stream(seed, i, "edges"))
        labels = _component_labels(graph, open_idx)
        for j, (x, y) in enumerate(pairs):
            if x == y:
                succ[j] += values[x] >= 0
            elif labels[x] == labels[y]:
                succ[j] += 1
    rows = []
    for (x, y), t, s in zip(pairs, targets, succ):
        est = ObservableEstimate.from_bernoulli(int(s), samples, seed)
        sigma = math.sqrt(max(t * (1 - t), 1e-12) / samples)
        rows.append({"pair": (x, y), "target": t, "estimate": est,
                     "z": (est.estimate - t) / sigma})
    return rows


def cluster_capacity_tail(graph, samples, thresholds, seed, tol=1e-8, fit=True):
    """Empirical tail P(cap(cluster of 0 at level 0) > t) with log-log slope.

    Clusters touching the window boundary are right-censored and counted as
    exceeding every threshold."""
    from .graph import DomainMask
    sampler = _box_sampler(graph)
    gop = GreenOperator(DomainMask.full(graph), tol=tol)
    center = box_center(graph)
    cap_single = 1.0 / gop.green(center, center)
    boundary = _boundary_mask(graph)
    thresholds = sorted(float(t) for t in thresholds)
    tarr = np.asarray(thresholds)
    exceed = np.zeros(len(thresholds), dtype=np.int64)
    censored = 0
    for i in range(samples):
        values = sampler.sample(stream(seed, i, "field"))
        open_idx = sample_open_edges(graph, values, 0.0, stream(seed, i, "edges"))
        if open_idx.size == 0:
            cap = cap_single
        else:
            labels = _component_labels(graph, open_idx)
            K = np.flatnonzero(labels == labels[center])
            if len(K) == 1:
                cap = cap_single
            elif boundary[K].any():
                censored += 1
                exceed += 1
                continue
            else:
                cap = equilibrium_measure(gop, K).capacity
        exceed += cap > tarr
    rows = [(t, ObservableEstimate.from_bernoulli(int(h), samples, seed))
            for t, h in zip(thresholds, exceed)]
    out = {"rows": rows, "censored": censored}
    if fit and samples > 0:
        try:
            out["fit"] = fit_exponent(thresholds, [r[1].estimate for r in rows])
        except ValueError:
            out["fit"] = None
    return out


@dataclass
class TheoryPredictions:
    xi: float
    q: float
    b1: int
    b2: int
    one_arm_upper: float     # q(R) R^{-nu/2}
    two_point_shape: float   # near-critical decay factor at (a, R)


def loglog_correction(R, nu, alpha):
    """The correction factor q(R) of the critical one-arm upper bound."""
    if R < 3:
        raise GraphError("bad_radius", "q(R) needs R >= 3 (log log undefined)")
    lR, llR = math.log(R), math.log(math.log(R))
    if nu == 1:
        return llR
    if nu == alpha / 2:
        return lR**nu * llR**nu
    if 1 < nu < alpha / 2:
        return lR ** (0.5 * (nu - 1)) * llR**nu
    raise GraphError("bad_exponents", "need 1 <= nu <= alpha/2")


def theory_predictions(a, R, nu, alpha):
    """Correlation length, one-arm correction factor, indicator constants, and
    the near-critical two-point upper-bound shape at (a, R)."""
    b1 = 1 if nu == 1 else 0
    b2 = 1 if alpha == 2 * nu else 0
    xi = float("inf") if a == 0 else abs(a) ** (-2.0 / nu)
    q = loglog_correction(R, nu, alpha)
    if a == 0:
        shape = 1.0
    elif nu == 1:
        u = a * a * R
        shape = math.exp(-u / max(math.log(u) if u > 0 else 1.0, 1.0))
    elif nu == alpha / 2:
        u = abs(a) ** (2.0 / nu) * R
        shape = math.exp(-u / max(math.log(1.0 / abs(a)), 1.0))
    else:
        u = abs(a) ** (2.0 / nu) * R
        shape = math.exp(-u)
    return TheoryPredictions(xi, q, b1, b2, q * R ** (-nu / 2.0), shape)
