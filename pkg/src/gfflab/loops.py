"""Discrete-time Markovian loop soups with exact trace / log-det oracles,
loop clusters, big-loop classification over a coarse annuli schema, and the
bad-annuli statistic."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import DomainMask, GraphError, ball, build_packing, distances_from
from .potential import RecurrentDomainError, equilibrium_measure
from .streams import stream


@dataclass
class DiscreteLoop:
    """Cyclic vertex sequence Z_0, ..., Z_{n-1} with Z_n = Z_0; n >= 2."""

    vertices: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.int64)
        if len(self.vertices) < 2:
            raise GraphError("bad_loop", "loops have length >= 2")

    @property
    def length(self):
        return len(self.vertices)

    @property
    def range(self):
        return np.unique(self.vertices)

    def edge_multiset(self):
        v = self.vertices
        w = np.roll(v, -1)
        return list(zip(v.tolist(), w.tolist()))


class LoopMeasure:
    """Killed transition matrix P_U with cached powers; per-length loop masses
    m_n = tr(P_U^n)/n and the log-det total mass."""

    def __init__(self, domain: DomainMask, n_max):
        if n_max < 2:
            raise GraphError("bad_truncation", "need n_max >= 2")
        self.domain = domain
        self.graph = domain.graph
        self.n_max = int(n_max)
        self.vertices = domain.vertices
        self.nloc = len(self.vertices)
        adj = self.graph.adjacency()[self.vertices][:, self.vertices].toarray()
        lam = self.graph.lam[self.vertices]
        self.P = adj / lam[:, None]
        rho = max(abs(np.linalg.eigvals(self.P)))
        if rho >= 1.0 - 1e-12:
            raise RecurrentDomainError(f"killed walk not substochastic enough (rho={rho})")
        self.rho = float(rho)
        self.powers = [np.eye(self.nloc), self.P]
        for _ in range(2, self.n_max + 1):
            self.powers.append(self.powers[-1] @ self.P)
        self.masses = np.zeros(self.n_max + 1)
        for n in range(2, self.n_max + 1):
            self.masses[n] = np.trace(self.powers[n]) / n
        sign, logdet = np.linalg.slogdet(np.eye(self.nloc) - self.P)
        if sign <= 0:
            raise RecurrentDomainError("I - P_U not positive definite")
        self.total_mass = -logdet
        self.tail = self.total_mass - self.masses.sum()

    def to_global(self, local_ids):
        return self.vertices[local_ids]


def loop_mass_by_length(domain, n_max):
    """Masses m_n = tr(P_U^n)/n for 2 <= n <= n_max, the log-det total mass,
    and the truncation tail."""
    lm = LoopMeasure(domain, n_max)
    return {"masses": lm.masses, "total": lm.total_mass, "tail": lm.tail, "measure": lm}


@dataclass
class LoopSoupSample:
    loops: list
    alpha: float
    n_max: int
    domain: DomainMask

    def counts_by_length(self):
        out = np.zeros(self.n_max + 1, dtype=np.int64)
        for lp in self.loops:
            out[lp.length] += 1
        return out


def _sample_bridges(measure, n, roots, rng):
    """Vectorized bridge fill-in: paths of length n closing at the given roots
    (local indices).  Returns an (len(roots), n) array of local indices."""
    m = len(roots)
    P, powers = measure.P, measure.powers
    paths = np.empty((m, n), dtype=np.int64)
    paths[:, 0] = roots
    z = roots.copy()
    for step in range(1, n):
        k = n - step  # steps still needed to close the loop after this choice
        w = P[z, :] * powers[k][:, roots].T
        tot = w.sum(axis=1)
        u = rng.random(m) * tot
        cum = np.cumsum(w, axis=1)
        z = (cum < u[:, None]).sum(axis=1)
        paths[:, step] = z
    return paths


def sample_loop_ensemble(measure, alpha, nsoups, rng):
    """Poisson loop counts per (soup, length) plus the sampled vertex paths.

    Returns counts of shape (nsoups, n_max+1) and a dict n -> (paths, soup_idx)
    with paths in global vertex ids.
    """
    counts = np.zeros((nsoups, measure.n_max + 1), dtype=np.int64)
    by_length = {}
    for n in range(2, measure.n_max + 1):
        mean = alpha * measure.masses[n]
        if mean <= 0:
            continue
        c = rng.poisson(mean, size=nsoups)
        counts[:, n] = c
        total = int(c.sum())
        if total == 0:
            continue
        diag = np.diag(measure.powers[n]).copy()
        diag = np.clip(diag, 0.0, None)
        root_p = diag / diag.sum()
        roots = rng.choice(measure.nloc, size=total, p=root_p)
        paths = _sample_bridges(measure, n, roots, rng)
        soup_idx = np.repeat(np.arange(nsoups), c)
        by_length[n] = (measure.to_global(paths), soup_idx)
    return counts, by_length


def sample_loop_soup(domain, alpha, n_max, rng, tail_budget=1e-3, measure=None):
    """One rooted loop-soup draw: Poisson(alpha * m_n) loops per length, rooted
    by the diagonal weights and filled in by bridge decomposition."""
    lm = measure if measure is not None else LoopMeasure(domain, n_max)
    if lm.tail > tail_budget * max(lm.total_mass, 1e-300):
        raise GraphError("tail_budget",
                         f"truncation tail {lm.tail:.3e} exceeds budget; increase n_max")
    _, by_length = sample_loop_ensemble(lm, alpha, 1, rng)
    loops = [DiscreteLoop(p) for n, (paths, _) in sorted(by_length.items()) for p in paths]
    return LoopSoupSample(loops, alpha, lm.n_max, domain)


def _logdet_mass(graph, vertices):
    if len(vertices) == 0:
        return 0.0
    adj = graph.adjacency()[vertices][:, vertices].toarray()
    lam = graph.lam[np.asarray(vertices)]
    P = adj / lam[:, None]
    sign, logdet = np.linalg.slogdet(np.eye(len(vertices)) - P)
    if sign <= 0:
        raise RecurrentDomainError("I - P_V not positive definite")
    return -logdet


def _trace_mass(graph, vertices, n_max):
    if len(vertices) == 0:
        return np.zeros(n_max + 1)
    adj = graph.adjacency()[vertices][:, vertices].toarray()
    lam = graph.lam[np.asarray(vertices)]
    P = adj / lam[:, None]
    out = np.zeros(n_max + 1)
    Pk = P @ P
    for n in range(2, n_max + 1):
        out[n] = np.trace(Pk) / n
        Pk = Pk @ P
    return out


def loop_mass_crossing(domain, K, M, n_max=None):
    """Exact loop-measure mass of loops hitting both K and M, by inclusion-
    exclusion of log-determinants F(V) = -log det(I - P_V).

    With n_max set, the same inclusion-exclusion is applied to the truncated
    trace sums instead (the quantity matched by a truncated sampler).
    """
    K = set(int(v) for v in K)
    M = set(int(v) for v in M)
    if K & M:
        raise GraphError("overlap", "K and M must be disjoint")
    U = set(int(v) for v in domain.vertices)
    if not (K <= U and M <= U):
        raise GraphError("bad_vertex", "K and M must lie inside U")
    subsets = [U, U - K, U - M, U - (K | M)]
    signs = [1.0, -1.0, -1.0, 1.0]
    g = domain.graph
    if n_max is None:
        return sum(s * _logdet_mass(g, np.asarray(sorted(V), dtype=np.int64))
                   for s, V in zip(signs, subsets))
    masses = sum(s * _trace_mass(g, np.asarray(sorted(V), dtype=np.int64), n_max)
                 for s, V in zip(signs, subsets))
    return float(masses.sum())


@dataclass
class AnnuliSchema:
    """Concentric site families A_k in Lambda(L) and their annuli, with
    R = C (ell+1) L, so that the annuli sit inside B_R with linear gaps."""

    graph: object
    base: int
    L: int
    ell: int
    C: int
    R: int
    packing: object
    site_families: list   # k -> site vertex ids (global)
    annuli: list          # k -> vertex index arrays (global)


def build_annuli_schema(graph, L, ell, base=0, C=5, packing=None, verify=True):
    if L < 2 or ell < 1:
        raise GraphError("bad_scale", "need L >= 2 and ell >= 1")
    R = C * (ell + 1) * L
    dist0 = distances_from(graph, base)
    if dist0.max() <= R:
        raise GraphError("window_too_small", f"window has no vertices outside B_{R}")
    pl = packing if packing is not None else build_packing(graph, L, base=base)
    families, annuli = [], []
    for k in range(1, ell + 1):
        sphere = np.flatnonzero(dist0 == C * k * L)
        fam = []
        for y in pl.sites:
            dy = distances_from(graph, y, cutoff=L)
            if np.any((dy[sphere] >= 0)):
                fam.append(int(y))
        fam = np.array(sorted(fam), dtype=np.int64)
        ann = np.unique(np.concatenate([ball(graph, y, L) for y in fam])) if len(fam) else np.zeros(0, dtype=np.int64)
        families.append(fam)
        annuli.append(ann)
    schema = AnnuliSchema(graph, base, L, ell, C, R, pl, families, annuli)
    if verify:
        verify_annuli(schema)
    return schema


def verify_annuli(schema):
    """Exhaustive check: every annulus inside B_R and pairwise gaps >= |k-k'| L."""
    dist0 = distances_from(schema.graph, schema.base)
    for k, ann in enumerate(schema.annuli, start=1):
        if len(ann) == 0:
            raise GraphError("empty_annulus", f"annulus {k} is empty")
        if dist0[ann].max() > schema.R:
            raise GraphError("annulus_outside", f"annulus {k} leaves B_R")
    for k in range(len(schema.annuli)):
        dk = _multi_source_distance(schema.graph, schema.annuli[k])
        for j in range(len(schema.annuli)):
            if j == k:
                continue
            gap = dk[schema.annuli[j]].min()
            if gap < abs(j - k) * schema.L:
                raise GraphError("annulus_gap",
                                 f"d(A_{k + 1}, A_{j + 1}) = {gap} < {abs(j - k) * schema.L}")


def _multi_source_distance(graph, sources):
    adj = graph.adjacency()
    indptr, indices = adj.indptr, adj.indices
    dist = np.full(graph.n, -1, dtype=np.int64)
    frontier = np.asarray(sources, dtype=np.int64)
    dist[frontier] = 0
    d = 0
    while frontier.size:
        nbrs = np.unique(np.concatenate(
            [indices[indptr[u]:indptr[u + 1]] for u in frontier]))
        nbrs = nbrs[dist[nbrs] < 0]
        d += 1
        dist[nbrs] = d
        frontier = nbrs
    return dist


def big_loop_threshold(delta, L, nu, b2):
    return delta * L**nu * (np.log(L) ** (-b2) if b2 else 1.0)


def classify_loops(loops, gop, delta, L, nu, b2, schema=None):
    """Big/small split by range capacity against delta L^nu (log L)^{-b2}; with a
    schema, assign each big loop to the annuli k whose site balls contain it."""
    thr = big_loop_threshold(delta, L, nu, b2)
    caps = np.array([equilibrium_measure(gop, lp.range).capacity for lp in loops]) \
        if loops else np.zeros(0)
    big = caps >= thr
    out = {"threshold": thr, "caps": caps, "big": big}
    if schema is not None:
        per_k = [[] for _ in schema.site_families]
        for i, lp in enumerate(loops):
            if not big[i]:
                continue
            r = lp.range
            for k, fam in enumerate(schema.site_families):
                if any(np.all(np.isin(r, ball(schema.graph, y, schema.L))) for y in fam):
                    per_k[k].append(i)
                    break
        out["per_annulus"] = per_k
    return out


def loop_clusters(loops, base):
    """Union-find over loops whose discrete ranges share a vertex; returns the
    vertex set of the cluster through the base point and the loop indices in it.

    This is the discrete-skeleton approximation of the continuous loop
    cluster: cable-interior intersections are not modeled, so it may
    under-connect relative to the metric-graph cluster.
    """
    parent = list(range(len(loops)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    owner = {}
    for i, lp in enumerate(loops):
        for v in lp.range:
            v = int(v)
            if v in owner:
                ri, rj = find(i), find(owner[v])
                if ri != rj:
                    parent[ri] = rj
            else:
                owner[v] = i
    through = [i for i, lp in enumerate(loops) if base in lp.range]
    if not through:
        return np.zeros(0, dtype=np.int64), []
    root = find(through[0])
    members = [i for i in range(len(loops)) if find(i) == root]
    verts = np.unique(np.concatenate([loops[i].range for i in members]))
    return verts, members


def bad_annuli_count(loops, schema, classification, base=None):
    """N = number of annuli k such that the loop cluster of the base crosses
    B_R and contains no big loop assigned to annulus k."""
    base = schema.base if base is None else base
    verts, members = loop_clusters(loops, base)
    if len(verts) == 0:
        return 0
    dist0 = distances_from(schema.graph, base)
    if dist0[verts].max() <= schema.R:
        return 0
    member_set = set(members)
    N = 0
    for k, idxs in enumerate(classification["per_annulus"]):
        if not any(i in member_set for i in idxs):
            N += 1
    return N


def restriction_property_test(domain, subdomain, alpha, n_max, nsoups, seed):
    """Per-length statistics of loops of the U-soup confined to U' against the
    subdomain trace masses and a directly sampled U'-soup (z-scores)."""
    lm = LoopMeasure(domain, n_max)
    lm_sub = LoopMeasure(subdomain, n_max)
    sub = set(int(v) for v in subdomain.vertices)
    counts_big, by_length = sample_loop_ensemble(lm, alpha, nsoups, stream(seed, 0, "soup"))
    confined = np.zeros((nsoups, n_max + 1), dtype=np.int64)
    for n, (paths, soup_idx) in by_length.items():
        inside = np.all(np.isin(paths, sorted(sub)), axis=1)
        np.add.at(confined[:, n], soup_idx[inside], 1)
    counts_direct, _ = sample_loop_ensemble(lm_sub, alpha, nsoups, stream(seed, 1, "soup"))
    rows = []
    for n in range(2, n_max + 1):
        target = alpha * lm_sub.masses[n]
        mc, md = confined[:, n], counts_direct[:, n]
        se_c = mc.std(ddof=1) / np.sqrt(nsoups) if nsoups > 1 else float("nan")
        se_2 = np.sqrt(mc.var(ddof=1) / nsoups + md.var(ddof=1) / nsoups)
        z_mass = (mc.mean() - target) / se_c if se_c > 0 else 0.0
        z_pair = (mc.mean() - md.mean()) / se_2 if se_2 > 0 else 0.0
        rows.append({"n": n, "analytic": target, "confined_mean": mc.mean(),
                     "direct_mean": md.mean(), "z_mass": z_mass, "z_pair": z_pair})
    return rows
