"""The acceptance gate: twelve self-contained criterion checks, each printing
one pass/fail line.  `gfflab accept` and the test suite both run these."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .explab import ExperimentConfig, run
from .field import DenseSampler, bond_config, sample_open_edges
from .fitting import fit_exponent
from .graph import (DomainMask, WeightedGraph, ball, build_lattice_box,
                    build_packing, distances_from)
from .interlacements import (brute_force_obstacle_count, good_obstacle_check,
                             vacancy_test)
from .loops import LoopMeasure, sample_loop_ensemble
from .percolation import (_component_labels, arcsin_validation,
                          theory_predictions)
from .potential import (GreenOperator, box_center, capacity,
                        capacity_scaling_scan, capacity_variational,
                        equilibrium_measure, hitting_vector)
from .streams import stream


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float


def _scale(n, fast):
    return max(100, n // 20) if fast else n


# 1 ------------------------------------------------------------------------

def criterion_1_arcsin(fast=False, workers=1):
    """Connectivity at level 0 matches the arcsin two-point formula."""
    n = _scale(10**5, fast)
    # two-vertex path domain, exact target 1/6
    path = WeightedGraph(4, np.array([0, 1, 2]), np.array([1, 2, 3]),
                         np.ones(3), kill=np.zeros(4))
    dom = DomainMask.from_vertices(path, [1, 2])
    gop = GreenOperator(dom)
    rng = stream(101, 0, "field")
    phi = DenseSampler(gop).sample(rng, size=n)
    pos = np.clip(phi, 0.0, None)
    p_open = 1.0 - np.exp(-2.0 * pos[:, 1] * pos[:, 2])
    hit = stream(101, 0, "edges").random(n) < p_open
    target = 1.0 / 6.0
    se = math.sqrt(target * (1 - target) / n)
    z_path = (hit.mean() - target) / se
    ok_path = abs(z_path) <= 3.0

    box, _ = build_lattice_box(3, 16)
    c = box_center(box)
    s = 16
    pairs = [(c, c + 1), (c, c + 2), (c, c + 3), (c, c + 2 * s + 2), (c, c + 6)]
    rows = arcsin_validation(box, pairs, samples=n, seed=102)
    zmax = max(abs(r["z"]) for r in rows)
    ok = ok_path and zmax <= 3.0
    return ok, f"path z={z_path:+.2f}, box max|z|={zmax:.2f} over {len(pairs)} pairs"


# 2 ------------------------------------------------------------------------

def _random_transient_graph(rng, nmax=200):
    n = int(rng.integers(5, nmax + 1))
    # random spanning tree plus extra edges, random weights, one killed vertex
    edges = {}
    order = rng.permutation(n)
    for i in range(1, n):
        u = int(order[i])
        v = int(order[rng.integers(0, i)])
        edges[(min(u, v), max(u, v))] = float(rng.uniform(0.5, 2.0))
    for _ in range(int(rng.integers(0, 2 * n))):
        u, v = rng.integers(0, n, size=2)
        if u != v:
            edges[(min(u, v), max(u, v))] = float(rng.uniform(0.5, 2.0))
    eu = np.array([e[0] for e in edges], dtype=np.int64)
    ev = np.array([e[1] for e in edges], dtype=np.int64)
    ew = np.array(list(edges.values()))
    kill = np.zeros(n)
    kill[rng.integers(0, n, size=max(1, n // 10))] += rng.uniform(0.5, 2.0)
    return WeightedGraph(n, eu, ev, ew, kill=kill)


def criterion_2_capacity_consistency(fast=False, workers=1):
    """Variational capacity equals equilibrium capacity; last-exit identity."""
    rng = np.random.default_rng(2024)
    trials = 10 if fast else 50
    worst_rel, worst_res = 0.0, 0.0
    for _ in range(trials):
        g = _random_transient_graph(rng)
        gop = GreenOperator(DomainMask.full(g))
        k = int(rng.integers(1, min(g.n, 12)))
        K = np.unique(rng.integers(0, g.n, size=k))
        em = equilibrium_measure(gop, K)
        cv = capacity_variational(gop, K)
        rel = abs(cv - em.capacity) / em.capacity
        worst_rel = max(worst_rel, rel)
        # last-exit: P_x(hit K) = sum_y g(x, y) e(y), every x
        h = hitting_vector(gop, K)
        G = np.column_stack([gop.green_column(int(y)) for y in em.K])
        res = np.abs(G @ em.masses - h).max()
        worst_res = max(worst_res, res)
    ok = worst_rel <= 1e-6 and worst_res <= 1e-8
    return ok, f"{trials} graphs: max rel cap diff {worst_rel:.2e}, max last-exit residual {worst_res:.2e}"


# 3 ------------------------------------------------------------------------

def criterion_3_ball_capacity_scaling(fast=False, workers=1):
    radii = [2, 3, 4] if fast else [2, 3, 4, 6, 8]
    out = capacity_scaling_scan(3, radii, side=32 if fast else 64)
    ok = 0.8 <= out["slope"] <= 1.2
    return ok, f"cap(B_R) log-log slope {out['slope']:.3f} in [0.8, 1.2]"


# 4 ------------------------------------------------------------------------

def criterion_4_one_arm(fast=False, workers=1):
    samples = 2000 if fast else 20000
    cfg = ExperimentConfig(kind="one_arm",
                           graph={"lattice": {"dim": 3, "side": 64}},
                           params={"a": 0.0, "radii": [4, 8, 16, 24]},
                           samples=samples, seed=404)
    rows, man = run(cfg, workers=workers)
    slope = man.extras["fit"]["slope"]
    expo = -slope
    ok = 0.40 <= expo <= 0.65
    ps = ", ".join(f"R={r['R']}: {r['p']:.4f}" for r in rows)
    return ok, f"fitted exponent {expo:.3f} in [0.40, 0.65] ({ps})"


# 5 ------------------------------------------------------------------------

def _loop_count_check(domain, alpha, n_max, nsoups, seed):
    lm = LoopMeasure(domain, n_max)
    counts, _ = sample_loop_ensemble(lm, alpha, nsoups, stream(seed, 0, "soup"))
    zs = []
    for n in range(2, n_max + 1):
        m = alpha * lm.masses[n]
        if m == 0:
            if counts[:, n].any():
                zs.append(np.inf)
            continue
        c = counts[:, n]
        zs.append(abs(c.mean() - m) / math.sqrt(m / nsoups))
        # Poisson sample variance has variance (m + 2 m^2) / N
        zs.append(abs(c.var(ddof=1) - m) / math.sqrt((m + 2 * m * m) / nsoups))
    tot = counts.sum(axis=1)
    m_tot = alpha * (lm.total_mass - lm.tail)
    z_tot = abs(tot.mean() - m_tot) / math.sqrt(m_tot / nsoups)
    return max(zs), z_tot, alpha * lm.tail


def criterion_5_loop_count_laws(fast=False, workers=1):
    nsoups = _scale(10**5, fast)
    path = WeightedGraph(4, np.array([0, 1, 2]), np.array([1, 2, 3]),
                         np.ones(3), kill=np.zeros(4))
    two = DomainMask.from_vertices(path, [1, 2])
    z2, zt2, tail2 = _loop_count_check(two, 0.5, 8, nsoups, 505)
    box, dom = build_lattice_box(2, 5)
    z5, zt5, tail5 = _loop_count_check(dom, 0.5, 8, nsoups, 506)
    worst = max(z2, zt2, z5, zt5)
    ok = worst <= 3.0
    return ok, (f"max |z| {worst:.2f} over per-length means/vars and totals "
                f"(tails {tail2:.2e}, {tail5:.2e})")


# 6 ------------------------------------------------------------------------

def criterion_6_restriction(fast=False, workers=1):
    from .loops import restriction_property_test
    nsoups = _scale(3 * 10**4, fast)
    box, _ = build_lattice_box(2, 6)
    dom = DomainMask.from_vertices(box, list(range(24)))
    sub = DomainMask.from_vertices(box, list(range(12)))
    rows = restriction_property_test(dom, sub, 0.5, 10, nsoups, seed=606)
    zmax = max(max(abs(r["z_mass"]), abs(r["z_pair"])) for r in rows)
    ok = zmax <= 3.0
    return ok, f"max per-length |z| {zmax:.2f} (confined vs analytic and vs direct)"


# 7 ------------------------------------------------------------------------

def criterion_7_crossing_mass(fast=False, workers=1):
    nsoups = _scale(2 * 10**4, fast)
    box, _ = build_lattice_box(2, 4)
    dom = DomainMask.full(box)
    verts = list(range(box.n))
    rng = np.random.default_rng(707)
    pairs = []
    while len(pairs) < 10:
        K = sorted(int(v) for v in rng.choice(verts, size=rng.integers(1, 3),
                                              replace=False))
        M = sorted(int(v) for v in rng.choice(verts, size=rng.integers(1, 3),
                                              replace=False))
        if not set(K) & set(M):
            pairs.append((K, M))
    cfg = ExperimentConfig(kind="crossing", graph={"lattice": {"dim": 2, "side": 4}},
                           params={"set_pairs": pairs, "alpha": 0.5, "n_max": 40},
                           samples=nsoups, seed=708)
    rows, _ = run(cfg, workers=workers)
    # compare against the exact log-det mass; the truncation gap is separate
    zmax, gap = 0.0, 0.0
    for r in rows:
        target = 1.0 - math.exp(-0.5 * r["mass_exact"])
        se = math.sqrt(max(target * (1 - target), 1e-12) / nsoups)
        zmax = max(zmax, abs(r["p_hat"] - target) / se)
        gap = max(gap, abs(r["mass_exact"] - r["mass_truncated"]))
    ok = zmax <= 3.0
    return ok, f"{len(rows)} (K, M) pairs: max |z| {zmax:.2f}, truncation gap {gap:.1e}"


# 8 ------------------------------------------------------------------------

def criterion_8_vacancy(fast=False, workers=1):
    nsamples = _scale(2000, fast)
    box, _ = build_lattice_box(3, 14)
    c = box_center(box)
    W = ball(box, c, 2)
    halo = ball(box, c, 6)
    worst_z, worst_pz = 0.0, 0.0
    for kr in (1, 2):
        K = ball(box, c, kr)
        rows = vacancy_test(box, W, halo, K, [0.05, 0.1, 0.2], nsamples, seed=808 + kr)
        for r in rows:
            worst_z = max(worst_z, abs(r["z"]))
            worst_pz = max(worst_pz, abs(r["traj_z_mean"]), abs(r["traj_z_var"]))
    ok = worst_z <= 3.0 and worst_pz <= 3.0
    return ok, (f"u in factor 4, two ball sizes: max vacancy |z| {worst_z:.2f}, "
                f"max Poisson count |z| {worst_pz:.2f}")


# 9 ------------------------------------------------------------------------

def criterion_9_obstacle_exactness(fast=False, workers=1):
    rng = np.random.default_rng(909)
    trials = 20 if fast else 100
    fails = 0
    for trial in range(trials):
        if trial % 2 == 0:
            g, _ = build_lattice_box(1, 12)
            L, R = 2, 6
        else:
            g, _ = build_lattice_box(2, 4)
            L, R = 2, 3
        pl = build_packing(g, L, base=0)
        obstacle = set(int(v) for v in
                       rng.choice(g.n, size=rng.integers(0, g.n // 2), replace=False))
        kappa = float(rng.uniform(0.1, 2.0))
        rep = good_obstacle_check(g, obstacle, L=L, R=R, n=2, kappa=kappa,
                                  base=0, packing=pl)
        inside = distances_from(g, 0)[pl.sites] <= R
        bf = brute_force_obstacle_count(pl, rep.scores, inside, 0)
        fails += bf != rep.minimal_count
    ok = fails == 0
    return ok, f"{trials} random patterns on <=12-site grids: {fails} mismatches"


# 10 -----------------------------------------------------------------------

def criterion_10_monotone_coupling(fast=False, workers=1):
    n = _scale(1000, fast)
    box, _ = build_lattice_box(3, 10)
    c = box_center(box)
    dist = distances_from(box, c)
    levels = [-0.5, 0.0, 0.5]
    from .field import FieldSample, SpectralSampler
    sampler = SpectralSampler(box)
    violations = 0
    for i in range(n):
        # one field, one persistent uniform per edge, swept over levels
        values = sampler.sample(stream(1010, i, "field"))
        uniforms = stream(1010, i, "edges").random(box.m)
        fs = FieldSample(DomainMask.full(box), values, (1010, i))
        opens, reaches = [], []
        for a in levels:
            bc = bond_config(box, fs, a, uniforms=uniforms)
            opens.append(bc.open)
            labels = _component_labels(box, np.flatnonzero(bc.open))
            reaches.append(dist[labels == labels[c]].max())
        for j in range(len(levels) - 1):
            if np.any(opens[j + 1] & ~opens[j]) or reaches[j + 1] > reaches[j]:
                violations += 1
    ok = violations == 0
    return ok, f"{n} coupled fields, levels {levels}: {violations} monotonicity violations"


# 11 -----------------------------------------------------------------------

def criterion_11_capacity_tail(fast=False, workers=1):
    samples = 300 if fast else 3000
    cfg = ExperimentConfig(kind="cap_tail",
                           graph={"lattice": {"dim": 3, "side": 48}},
                           params={"a": 0.0, "thresholds": [4.5, 8, 14, 25, 45]},
                           samples=samples, seed=1111)
    rows, man = run(cfg, workers=workers)
    slope = man.extras["fit"]["slope"]
    ok = -0.70 <= slope <= -0.35
    return ok, (f"tail slope {slope:.3f} in [-0.70, -0.35] over one decade "
                f"({man.extras['censored']} censored)")


# 12 -----------------------------------------------------------------------

NOT_REPRODUCIBLE = (
    "Declared out of desk-scale reach: the absolute constants of the one-arm "
    "bounds, the pi/6 one-arm amplitude on the cable system, and the "
    "near-critical exponent pair for general nu; covered instead by the "
    "property suites and the closed-form predictions below."
)


def criterion_12_declarations(fast=False, workers=1):
    tp0 = theory_predictions(0.0, 64, nu=1.0, alpha=3.0)
    tpn = theory_predictions(-0.2, 64, nu=1.0, alpha=3.0)
    checks = [
        tp0.xi == float("inf"),
        abs(tpn.xi - 0.2 ** -2.0) < 1e-12,
        tp0.b1 == 1 and tp0.b2 == 0,
        abs(tp0.one_arm_upper - math.log(math.log(64)) * 64 ** -0.5) < 1e-12,
        0.0 < tpn.two_point_shape < 1.0,
    ]
    ok = all(checks)
    return ok, NOT_REPRODUCIBLE if ok else f"prediction checks failed: {checks}"


_CRITERIA = [
    (1, "arcsin two-point identity", criterion_1_arcsin),
    (2, "capacity consistency + last-exit identity", criterion_2_capacity_consistency),
    (3, "ball capacity scaling", criterion_3_ball_capacity_scaling),
    (4, "one-arm exponent", criterion_4_one_arm),
    (5, "loop count laws", criterion_5_loop_count_laws),
    (6, "loop soup restriction property", criterion_6_restriction),
    (7, "crossing-loop mass oracle", criterion_7_crossing_mass),
    (8, "interlacement vacancy", criterion_8_vacancy),
    (9, "obstacle checker exactness", criterion_9_obstacle_exactness),
    (10, "monotone level coupling", criterion_10_monotone_coupling),
    (11, "cluster capacity tail", criterion_11_capacity_tail),
    (12, "declared non-reproducibles + predictions", criterion_12_declarations),
]


def run_acceptance(only=None, fast=False, workers=1, out_dir=None):
    results = []
    for num, name, fn in _CRITERIA:
        if only and num not in only:
            continue
        t0 = time.time()
        try:
            passed, detail = fn(fast=fast, workers=workers)
        except Exception as exc:  # a crash is a failure, not an abort
            passed, detail = False, f"error: {exc!r}"
        dt = time.time() - t0
        results.append(CriterionResult(num, name, passed, detail, dt))
        print(f"{'PASS' if passed else 'FAIL'} [{num:2d}] {name}: {detail} "
              f"({dt:.1f}s)")
    if out_dir:
        import json
        import os
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "acceptance.json"), "w") as f:
            json.dump([r.__dict__ for r in results], f, indent=2)
    return results
