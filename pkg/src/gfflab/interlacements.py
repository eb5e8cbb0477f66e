"""Random-interlacement sampling in finite windows, the vacancy identity,
the coarse-grid good-obstacle checker, and an obstacle-avoidance probe."""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .graph import DomainMask, GraphError, ball, build_packing, distances_from
from .percolation import ObservableEstimate
from .potential import GreenOperator, equilibrium_measure
from .streams import stream


class _WalkKernel:
    """Flat per-row cumulative edge weights so a batch of walkers at arbitrary
    vertices can all take one step with a single searchsorted call.

    Row r occupies C[indptr[r]:indptr[r+1]] = cumsum(weights of row r) + r*BIG,
    which is globally increasing, so a query t + z*BIG with t in [0, lam[z])
    lands in row z.  t beyond the row's edge mass means the killing mass was
    drawn and the walker dies.
    """

    def __init__(self, graph):
        adj = graph.adjacency()
        self.indptr = adj.indptr
        self.indices = adj.indices
        self.lam = graph.lam
        self.rowsum = np.asarray(adj.sum(axis=1)).ravel()
        self.big = float(self.lam.max()) * (1.0 + 1e-9) + 1.0
        row_of = np.repeat(np.arange(graph.n), np.diff(self.indptr))
        cum = np.concatenate([np.cumsum(adj.data[self.indptr[r]:self.indptr[r + 1]])
                              for r in range(graph.n)]) if len(adj.data) else np.zeros(0)
        self.flat_cum = cum + row_of * self.big

    def step(self, z, rng):
        """One step for walkers at vertices z. Returns (next vertex, died)."""
        t = rng.random(len(z)) * self.lam[z]
        died = t >= self.rowsum[z]
        j = np.searchsorted(self.flat_cum, t + z * self.big, side="left")
        nxt = np.where(died, z, self.indices[np.minimum(j, len(self.indices) - 1)])
        return nxt, died


@dataclass
class InterlacementSample:
    level: float
    window: np.ndarray
    fragments: list          # per trajectory: visited-vertex path inside the halo
    occupied: np.ndarray     # union of fragment ranges intersected with the window
    capacity: float          # cap of the window measured in the halo
    halo_margin: int


def _halo_vertices(graph, halo):
    if isinstance(halo, DomainMask):
        return halo.vertices
    return np.asarray(sorted(set(int(v) for v in halo)), dtype=np.int64)


def _set_diameter(graph, W):
    return max(int(distances_from(graph, int(w))[W].max()) for w in W)


def _margin(graph, W, halo_set):
    outside = np.setdiff1d(np.arange(graph.n), halo_set)
    if len(outside) == 0:
        # the halo is the whole finite window; death plays the role of escape
        return graph.n
    d = _multi_dist(graph, outside)
    return int(d[W].min())


def _multi_dist(graph, sources):
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


def halo_capacity(graph, W, halo):
    """cap of W for the walk killed outside the halo (the escape proxy)."""
    halo_set = _halo_vertices(graph, halo)
    gop = GreenOperator(DomainMask.from_vertices(graph, halo_set))
    em = equilibrium_measure(gop, W)
    return em, gop


def sample_interlacement(graph, W, halo, u, rng, max_steps=10**7,
                         check_margin=True):
    """Poisson(u * cap_halo(W)) walk fragments from the normalized equilibrium
    measure of W, each run until it leaves the halo or is killed.

    Escape from the halo stands in for escape to infinity; the bias of that
    proxy is what halo_bias_report quantifies.
    """
    if u < 0:
        raise GraphError("bad_level", "interlacement level must be nonnegative")
    W = np.asarray(sorted(set(int(v) for v in W)), dtype=np.int64)
    halo_set = _halo_vertices(graph, halo)
    if not set(W.tolist()) <= set(halo_set.tolist()):
        raise GraphError("bad_window", "window must sit inside the halo")
    margin = _margin(graph, W, halo_set)
    if check_margin and margin < _set_diameter(graph, W):
        raise GraphError("margin", f"halo margin {margin} < diameter of the window")
    em, _ = halo_capacity(graph, W, halo_set)
    n_traj = rng.poisson(u * em.capacity)
    fragments = []
    if n_traj > 0:
        starts = em.K[rng.choice(len(em.K), size=n_traj, p=em.normalized())]
        in_halo = np.zeros(graph.n, dtype=bool)
        in_halo[halo_set] = True
        kern = _WalkKernel(graph)
        for s in starts:
            path = [int(s)]
            z = np.array([s], dtype=np.int64)
            for _ in range(max_steps):
                z, died = kern.step(z, rng)
                if died[0] or not in_halo[z[0]]:
                    break
                path.append(int(z[0]))
            else:
                raise GraphError("max_steps", "walker exceeded the step budget")
            fragments.append(np.array(path, dtype=np.int64))
    wset = set(W.tolist())
    occ = sorted(set(int(v) for p in fragments for v in p if int(v) in wset))
    return InterlacementSample(u, W, fragments, np.array(occ, dtype=np.int64),
                               em.capacity, margin)


def vacancy_trial_batch(graph, W, halo, K, u, nsamples, seed, max_rounds=10**6):
    """Batched vacancy trials: per replica, whether the interlacement at level u
    misses K, plus the trajectory count.  All replicas' walkers step together.
    """
    W = np.asarray(sorted(set(int(v) for v in W)), dtype=np.int64)
    K = np.asarray(sorted(set(int(v) for v in K)), dtype=np.int64)
    if not set(K.tolist()) <= set(W.tolist()):
        raise GraphError("bad_window", "K must lie inside the window")
    halo_set = _halo_vertices(graph, halo)
    em, _ = halo_capacity(graph, W, halo_set)
    rng = stream(seed, 0, "walks")
    counts = rng.poisson(u * em.capacity, size=nsamples)
    total = int(counts.sum())
    hit = np.zeros(total, dtype=bool)
    if total:
        z = em.K[rng.choice(len(em.K), size=total, p=em.normalized())]
        in_halo = np.zeros(graph.n, dtype=bool)
        in_halo[halo_set] = True
        in_k = np.zeros(graph.n, dtype=bool)
        in_k[K] = True
        kern = _WalkKernel(graph)
        active = np.arange(total)
        hit[active] |= in_k[z]
        for _ in range(max_rounds):
            if active.size == 0:
                break
            nz, died = kern.step(z, rng)
            alive = ~died & in_halo[nz]
            hit[active[alive]] |= in_k[nz[alive]]
            active, z = active[alive], nz[alive]
        else:
            raise GraphError("max_rounds", "walkers exceeded the round budget")
    owner = np.repeat(np.arange(nsamples), counts)
    touched = np.zeros(nsamples, dtype=bool)
    np.logical_or.at(touched, owner, hit)
    return {"vacant": ~touched, "counts": counts, "capacity_W": em.capacity}


def vacancy_test(graph, W, halo, K, u_values, nsamples, seed):
    """Empirical P(interlacement at level u misses K) against exp(-u cap(K)),
    with Poisson mean/variance checks on the trajectory counts."""
    halo_set = _halo_vertices(graph, halo)
    em_k, _ = halo_capacity(graph, K, halo_set)
    rows = []
    for j, u in enumerate(u_values):
        out = vacancy_trial_batch(graph, W, halo, K, u, nsamples, seed + 1000 * j)
        target = float(np.exp(-u * em_k.capacity))
        est = ObservableEstimate.from_bernoulli(out["vacant"].sum(), nsamples, seed)
        z = (est.estimate - target) / est.stderr if est.stderr > 0 else 0.0
        c = out["counts"]
        mean_t = u * out["capacity_W"]
        z_mean = (c.mean() - mean_t) / np.sqrt(mean_t / nsamples)
        z_var = (c.var(ddof=1) - mean_t) / (mean_t * np.sqrt(2.0 / nsamples))
        rows.append({"u": u, "phat": est.estimate, "target": target,
                     "stderr": est.stderr, "z": z, "cap_K": em_k.capacity,
                     "traj_mean": c.mean(), "traj_z_mean": z_mean,
                     "traj_z_var": z_var})
    return rows


def halo_bias_report(graph, K, halo_small, halo_big):
    """Doubling check on the escape proxy: relative change of cap(K) when the
    halo grows.  The infinite-graph capacity is the halo-size limit."""
    em_s, _ = halo_capacity(graph, K, halo_small)
    em_b, _ = halo_capacity(graph, K, halo_big)
    bias = abs(em_s.capacity - em_b.capacity) / em_b.capacity
    return {"cap_small": em_s.capacity, "cap_big": em_b.capacity,
            "relative_bias": bias}


@dataclass
class ObstacleReport:
    L: int
    R: int
    n: int
    kappa: float
    sites: np.ndarray       # coarse-grid sites considered
    scores: np.ndarray      # goodness bit per site
    minimal_count: int      # min over coarse paths from base to outside B_R
    verdict: bool

    def good_sites(self):
        return self.sites[self.scores.astype(bool)]


def good_obstacle_check(graph, obstacle, L, R, n, kappa, base=0, gop=None,
                        packing=None, tol=1e-8):
    """Is the obstacle (L, R, n, kappa)-good seen from the base?

    Site score s(y) = 1{cap(obstacle within distance L of y) >= kappa}; the
    minimum over coarse-grid paths from the base to outside B_R of the number
    of good sites met inside B_R is computed exactly by Dijkstra with
    nonnegative node weights (sites beyond R cost nothing).
    """
    obstacle = set(int(v) for v in obstacle)
    pl = packing if packing is not None else build_packing(graph, L, base=base)
    if base not in set(pl.sites.tolist()):
        raise GraphError("bad_base", "base is not a coarse-grid site")
    if gop is None:
        gop = GreenOperator(DomainMask.full(graph))
    dist0 = distances_from(graph, base)
    if not np.any(dist0[pl.sites] > R):
        raise GraphError("window_too_small", "no coarse site outside B_R")
    site_index = {int(y): i for i, y in enumerate(pl.sites)}
    scores = np.zeros(len(pl.sites), dtype=np.int64)
    for i, y in enumerate(pl.sites):
        local = sorted(obstacle & set(ball(graph, int(y), L).tolist()))
        if local:
            cap = equilibrium_measure(gop, np.array(local)).capacity
            scores[i] = 1 if cap >= kappa - tol else 0
    inside = dist0[pl.sites] <= R
    weight = np.where(inside, scores, 0)

    start = site_index[base]
    best = np.full(len(pl.sites), np.iinfo(np.int64).max, dtype=np.int64)
    best[start] = weight[start]
    heap = [(best[start], start)]
    minimal = None
    while heap:
        d, i = heapq.heappop(heap)
        if d > best[i]:
            continue
        if not inside[i]:
            minimal = int(d)
            break
        for j in pl.neighbors(i):
            nd = d + weight[j]
            if nd < best[j]:
                best[j] = nd
                heapq.heappush(heap, (nd, j))
    if minimal is None:
        raise GraphError("unreachable", "no coarse path from base to outside B_R")
    return ObstacleReport(L, R, n, kappa, pl.sites, scores, minimal, minimal >= n)


def brute_force_obstacle_count(pl, scores, inside, base_site):
    """Exhaustive minimal good-site count over all simple coarse paths from the
    base site to any site outside B_R.  Test oracle; exponential in site count."""
    best = [None]
    nsites = len(pl.sites)
    weight = [int(scores[i]) if inside[i] else 0 for i in range(nsites)]

    def dfs(i, seen, acc):
        if best[0] is not None and acc >= best[0]:
            return
        if not inside[i]:
            best[0] = acc
            return
        for j in pl.neighbors(i):
            if j not in seen:
                dfs(int(j), seen | {int(j)}, acc + weight[j])

    dfs(base_site, {base_site}, weight[base_site])
    return best[0]


def avoidance_probe(graph, obstacles, x, walks, seed, base=0, max_rounds=10**6):
    """Monte Carlo of P_base(hit x before the obstacle, before dying).

    With a list of obstacle sets, all are scored on the same trajectories, so
    enlarging an obstacle can only remove successes (exact pathwise coupling).
    Returns one ObservableEstimate per obstacle (a bare set gets a bare
    estimate).
    """
    single = not isinstance(obstacles, (list, tuple))
    obs_list = [obstacles] if single else list(obstacles)
    x = int(x)
    masks = []
    for ob in obs_list:
        ob = set(int(v) for v in ob)
        if x in ob:
            raise GraphError("bad_target", "target lies inside an obstacle")
        m = np.zeros(graph.n, dtype=bool)
        m[sorted(ob)] = True
        masks.append(m)
    rng = stream(seed, 0, "walks")
    kern = _WalkKernel(graph)
    time_x = np.full(walks, np.inf)
    time_ob = np.full((len(obs_list), walks), np.inf)
    z = np.full(walks, base, dtype=np.int64)
    active = np.arange(walks)
    t = 0

    def record(idx, pos, tme):
        at_x = pos == x
        time_x[idx[at_x]] = np.minimum(time_x[idx[at_x]], tme)
        for k, m in enumerate(masks):
            hit = m[pos]
            time_ob[k, idx[hit]] = np.minimum(time_ob[k, idx[hit]], tme)
        return at_x

    at_x = record(active, z, t)
    active, z = active[~at_x], z[~at_x]
    while active.size:
        t += 1
        if t > max_rounds:
            raise GraphError("max_rounds", "walkers exceeded the round budget")
        nz, died = kern.step(z, rng)
        active, z = active[~died], nz[~died]
        at_x = record(active, z, t)
        active, z = active[~at_x], z[~at_x]
    ests = [ObservableEstimate.from_bernoulli(int((time_x < time_ob[k]).sum()),
                                              walks, seed)
            for k in range(len(obs_list))]
    return ests[0] if single else ests
