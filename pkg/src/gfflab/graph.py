"""Weighted graphs, lattice boxes with Dirichlet halos, and coarse packing lattices."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse


class GraphError(ValueError):
    """Graph construction / validation failure with a stable error code."""

    def __init__(self, code, message):
        super().__init__(f"{code}: {message}")
        self.code = code


@dataclass
class WeightedGraph:
    """Undirected weighted graph with optional extra Dirichlet killing mass per vertex.

    Vertex masses are lam[x] = sum of incident edge weights plus kill[x].
    For lattice boxes the kill term absorbs the one-layer halo, so interior
    vertex masses equal 2d even at the box face.
    """

    n: int
    edge_u: np.ndarray
    edge_v: np.ndarray
    edge_w: np.ndarray
    kill: np.ndarray = None
    coords: np.ndarray = None  # (n, d) integer lattice coordinates, if any
    shape: tuple = None        # lattice box shape, if any
    _adj: sparse.csr_matrix = field(default=None, repr=False)

    def __post_init__(self):
        self.edge_u = np.asarray(self.edge_u, dtype=np.int64)
        self.edge_v = np.asarray(self.edge_v, dtype=np.int64)
        self.edge_w = np.asarray(self.edge_w, dtype=np.float64)
        if self.kill is None:
            self.kill = np.zeros(self.n)
        else:
            self.kill = np.asarray(self.kill, dtype=np.float64)
        if np.any(self.edge_w <= 0):
            raise GraphError("nonpositive_weight", "edge weights must be > 0")
        if np.any(self.edge_u == self.edge_v):
            raise GraphError("self_edge", "self-edges are not allowed")

    @property
    def m(self):
        return len(self.edge_w)

    def adjacency(self):
        """Symmetric CSR weight matrix (cached)."""
        if self._adj is None:
            u = np.concatenate([self.edge_u, self.edge_v])
            v = np.concatenate([self.edge_v, self.edge_u])
            w = np.concatenate([self.edge_w, self.edge_w])
            self._adj = sparse.csr_matrix((w, (u, v)), shape=(self.n, self.n))
        return self._adj

    @property
    def lam(self):
        """Vertex masses lambda_x, including any killing mass."""
        return np.asarray(self.adjacency().sum(axis=1)).ravel() + self.kill

    @property
    def degree_mass(self):
        """Edge-weight sums only (no killing)."""
        return np.asarray(self.adjacency().sum(axis=1)).ravel()

    def controlled_weight_ratio(self):
        """min over edges of lambda_xy / lambda_x (uniform-ellipticity report)."""
        lam = self.lam
        r_uv = self.edge_w / lam[self.edge_u]
        r_vu = self.edge_w / lam[self.edge_v]
        return float(min(r_uv.min(), r_vu.min()))

    def is_connected(self):
        ncomp, _ = sparse.csgraph.connected_components(self.adjacency(), directed=False)
        return ncomp == 1


@dataclass
class DomainMask:
    """Subset U of vertices; the complement acts as a killing boundary."""

    graph: WeightedGraph
    mask: np.ndarray  # boolean, length n

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != (self.graph.n,):
            raise GraphError("bad_mask", "mask length must equal vertex count")
        if not self.mask.any():
            raise GraphError("empty_domain", "domain U must be nonempty")

    @classmethod
    def from_vertices(cls, graph, vertices):
        mask = np.zeros(graph.n, dtype=bool)
        mask[np.asarray(list(vertices), dtype=np.int64)] = True
        return cls(graph, mask)

    @classmethod
    def full(cls, graph):
        return cls(graph, np.ones(graph.n, dtype=bool))

    @property
    def vertices(self):
        return np.flatnonzero(self.mask)

    @property
    def size(self):
        return int(self.mask.sum())


def build_lattice_box(dim, side, boundary="dirichlet"):
    """s^d box of Z^d with unit weights and one-layer Dirichlet halo in the masses.

    Returns (WeightedGraph, DomainMask) with the mask covering the whole box.
    Vertex order is row-major over the coordinates.
    """
    if dim < 1 or side < 1:
        raise GraphError("bad_box", "need dim >= 1 and side >= 1")
    if boundary != "dirichlet":
        raise GraphError("bad_box", f"unsupported boundary {boundary!r}")
    if dim * np.log(side + 1) > 62 * np.log(2):
        raise GraphError("bad_box", "box index space overflows 64-bit range")
    n = side**dim
    shape = (side,) * dim
    idx = np.arange(n).reshape(shape)
    eu, ev = [], []
    for axis in range(dim):
        lo = np.take(idx, range(side - 1), axis=axis).ravel()
        hi = np.take(idx, range(1, side), axis=axis).ravel()
        eu.append(lo)
        ev.append(hi)
    if eu and any(a.size for a in eu):
        edge_u = np.concatenate(eu)
        edge_v = np.concatenate(ev)
    else:
        edge_u = np.zeros(0, dtype=np.int64)
        edge_v = np.zeros(0, dtype=np.int64)
    edge_w = np.ones(len(edge_u))
    coords = np.stack(np.unravel_index(np.arange(n), shape), axis=1)
    g = WeightedGraph(n, edge_u, edge_v, edge_w, coords=coords, shape=shape)
    # halo deficit: each missing neighbor (coordinate at the face) adds unit mass
    deficit = 2.0 * dim - g.degree_mass
    g.kill = deficit
    if side == 1 and n == 1:
        pass  # single vertex, fully killed
    elif not g.is_connected():
        raise GraphError("disconnected", "box graph unexpectedly disconnected")
    return g, DomainMask.full(g)


def load_graph(path):
    """Read an edge-list file: lines "u v w", '#' comments, 0-based ids."""
    seen = {}
    eu, ev, ew = [], [], []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise GraphError("bad_line", f"line {lineno}: expected 'u v w'")
            try:
                u, v = int(parts[0]), int(parts[1])
                w = float(parts[2])
            except ValueError:
                raise GraphError("bad_line", f"line {lineno}: unparsable fields")
            if u < 0 or v < 0:
                raise GraphError("bad_line", f"line {lineno}: negative vertex id")
            if u == v:
                raise GraphError("self_edge", f"line {lineno}: self-edge {u}")
            if w <= 0:
                raise GraphError("nonpositive_weight", f"line {lineno}: weight {w}")
            key = (min(u, v), max(u, v))
            if key in seen:
                if seen[key] != w:
                    raise GraphError("asymmetric", f"line {lineno}: edge {key} listed with conflicting weights")
                raise GraphError("duplicate_edge", f"line {lineno}: edge {key} repeated")
            seen[key] = w
            eu.append(u)
            ev.append(v)
            ew.append(w)
    if not eu:
        raise GraphError("empty", "no edges in file")
    n = max(max(eu), max(ev)) + 1
    g = WeightedGraph(n, np.array(eu), np.array(ev), np.array(ew))
    if not g.is_connected():
        raise GraphError("disconnected", "input graph is not connected")
    return g


def _check_vertex(graph, x):
    if not (0 <= x < graph.n):
        raise GraphError("bad_vertex", f"vertex {x} out of range")


def distances_from(graph, x, cutoff=None):
    """BFS graph distances from x; unreachable / beyond-cutoff entries are -1."""
    _check_vertex(graph, x)
    adj = graph.adjacency()
    indptr, indices = adj.indptr, adj.indices
    dist = np.full(graph.n, -1, dtype=np.int64)
    dist[x] = 0
    frontier = np.array([x], dtype=np.int64)
    d = 0
    while frontier.size:
        if cutoff is not None and d >= cutoff:
            break
        nbrs = np.concatenate([indices[indptr[u]:indptr[u + 1]] for u in frontier])
        nbrs = np.unique(nbrs)
        nbrs = nbrs[dist[nbrs] < 0]
        d += 1
        dist[nbrs] = d
        frontier = nbrs
    return dist


def ball(graph, x, r):
    """Vertex set of the graph-distance ball B(x, r), as a sorted index array."""
    if r < 0:
        raise GraphError("bad_radius", "radius must be >= 0")
    dist = distances_from(graph, x, cutoff=r)
    return np.flatnonzero((dist >= 0) & (dist <= r))


def graph_distance(graph, x, y):
    _check_vertex(graph, y)
    dist = distances_from(graph, x)
    d = dist[y]
    if d < 0:
        raise GraphError("disconnected", f"no path between {x} and {y}")
    return int(d)


@dataclass
class PackingLattice:
    """Greedy coarse lattice Lambda(L): separated site set whose L-balls cover G."""

    graph: WeightedGraph
    L: int
    sites: np.ndarray          # vertex ids, sites[0] is the base point
    site_adj: sparse.csr_matrix  # adjacency between sites (boolean)

    @property
    def nsites(self):
        return len(self.sites)

    def neighbors(self, i):
        """Indices (into sites) of the sites adjacent to site i."""
        return self.site_adj.indices[self.site_adj.indptr[i]:self.site_adj.indptr[i + 1]]


def build_packing(graph, L, base=0):
    """Greedy maximal (floor(L/2)+1)-separated site set seeded at the base point.

    Sites are scanned in deterministic vertex order.  Adjacency between sites
    y, y' holds when some x in B(y, L) and x' in B(y', L) are neighbors in G.
    """
    if L < 1:
        raise GraphError("bad_scale", "need L >= 1")
    _check_vertex(graph, base)
    sep = L // 2 + 1
    blocked = np.zeros(graph.n, dtype=bool)
    sites = []
    order = [base] + [v for v in range(graph.n) if v != base]
    for v in order:
        if not blocked[v]:
            sites.append(v)
            blocked[ball(graph, v, sep - 1)] = True
    sites = np.array(sites, dtype=np.int64)
    # site adjacency: vertices may lie in several site balls
    cover_site = [[] for _ in range(graph.n)]
    for i, y in enumerate(sites):
        for v in ball(graph, y, L):
            cover_site[v].append(i)
    pairs = set()
    for u, v in zip(graph.edge_u, graph.edge_v):
        for i in cover_site[u]:
            for j in cover_site[v]:
                if i != j:
                    pairs.add((i, j))
    for v in range(graph.n):
        owners = cover_site[v]
        for i in owners:
            for j in owners:
                if i != j:
                    pairs.add((i, j))
    k = len(sites)
    if pairs:
        pu, pv = np.array(sorted(pairs)).T
        adj = sparse.csr_matrix((np.ones(len(pu), dtype=bool), (pu, pv)), shape=(k, k))
    else:
        adj = sparse.csr_matrix((k, k), dtype=bool)
    return PackingLattice(graph, L, sites, adj)


def verify_packing(pl):
    """Exhaustively check the packing invariants; returns the empirical cover radius ratio.

    Checks: base membership, pairwise separation >= floor(L/2)+1, and that the
    L-balls around the sites cover every vertex.
    """
    g, L = pl.graph, pl.L
    sep = L // 2 + 1
    covered = np.zeros(g.n, dtype=bool)
    for y in pl.sites:
        covered[ball(g, y, L)] = True
    if not covered.all():
        raise GraphError("packing_cover", "site L-balls do not cover the graph")
    for y in pl.sites:
        dist = distances_from(g, y, cutoff=sep - 1)
        near = np.flatnonzero(dist >= 0)
        hits = np.intersect1d(near, pl.sites)
        if len(hits) != 1:
            raise GraphError("packing_separation", f"sites within distance {sep - 1} of site {y}")
    return len(pl.sites) / max(1, g.n)
