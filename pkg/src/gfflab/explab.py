"""Experiment orchestration: JSON configs, deterministic replica fan-out,
CSV results with JSON run manifests, and the exponent fitter re-export."""

from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import percolation
from .field import SpectralSampler, sample_open_edges
from .fitting import fit_exponent
from .graph import DomainMask, GraphError, ball, build_lattice_box, load_graph
from .interlacements import (good_obstacle_check, halo_bias_report,
                             sample_interlacement, vacancy_test)
from .loops import (LoopMeasure, loop_mass_by_length, loop_mass_crossing,
                    restriction_property_test, sample_loop_ensemble)
from .potential import (GreenOperator, box_center, capacity_scaling_scan,
                        equilibrium_measure, tube_capacity)
from .streams import stream

SCHEMA_VERSION = 1
ARTIFACT_VERSION = "gfflab-results-1"

# Fixed replica block size.  Work is split into blocks of this many samples;
# block b uses streams keyed by its global block index, so the merged result
# is identical for any worker count.
BLOCK = 500


@dataclass
class ExperimentConfig:
    kind: str
    graph: dict = field(default_factory=dict)   # {"lattice": {"dim": d, "side": s}} or {"edge_list": path}
    params: dict = field(default_factory=dict)
    samples: int = 0
    seed: int = 0

    KINDS = ("gff", "one_arm", "two_point", "arcsin", "cap_tail", "cap_scan",
             "tube", "loops", "restriction", "crossing", "vacancy", "obstacle")

    def validate(self):
        if self.kind not in self.KINDS:
            raise GraphError("bad_config", f"unknown experiment kind {self.kind!r}")
        if self.samples < 0:
            raise GraphError("bad_config", "samples must be nonnegative")
        if "edge_list" in self.graph and not os.path.exists(self.graph["edge_list"]):
            raise GraphError("bad_config",
                             f"edge list not found: {self.graph['edge_list']}")
        return self

    def to_json(self):
        return json.dumps({"schema_version": SCHEMA_VERSION, **asdict(self)},
                          indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        ver = d.pop("schema_version", None)
        if ver != SCHEMA_VERSION:
            raise GraphError("bad_config", f"unsupported schema_version {ver}")
        return cls(**d).validate()

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_json(f.read())


@dataclass
class RunManifest:
    config: dict
    seed: int
    workers: int
    block: int
    solver_tol: float
    extras: dict
    wall_clock_s: float
    artifact_version: str = ARTIFACT_VERSION

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True, default=float)


def build_graph(spec):
    if "edge_list" in spec:
        return load_graph(spec["edge_list"])
    lat = spec.get("lattice", {"dim": 3, "side": 16})
    g, _ = build_lattice_box(int(lat["dim"]), int(lat["side"]))
    return g


def _blocks(samples):
    return [(b, lo, min(lo + BLOCK, samples))
            for b, lo in enumerate(range(0, samples, BLOCK))]


def merge_tallies(a, b):
    """Element-wise sum of two tally dicts; associative and commutative."""
    out = dict(a)
    for k, v in b.items():
        out[k] = out[k] + v if k in out else v
    return out


def _run_blocks(fn, args, samples, workers):
    blocks = _blocks(samples)
    tally = {}
    if workers <= 1 or len(blocks) <= 1:
        parts = [fn(args, b, lo, hi) for b, lo, hi in blocks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_block_call, [(fn, args, blk) for blk in blocks]))
    for p in parts:  # deterministic fold in block order
        tally = merge_tallies(tally, p)
    return tally


def _block_call(item):
    fn, args, (b, lo, hi) = item
    return fn(args, b, lo, hi)


# ---------------------------------------------------------------- block fns

def _one_arm_block(args, b, lo, hi):
    graph, a, radii, seed = args
    sampler = SpectralSampler(graph)
    center = box_center(graph)
    from .graph import distances_from
    dist = distances_from(graph, center)
    hits = np.zeros(len(radii), dtype=np.int64)
    rr = np.asarray(radii)
    for i in range(lo, hi):
        values = sampler.sample(stream(seed, i, "field"))
        open_idx = sample_open_edges(graph, values, a, stream(seed, i, "edges"))
        labels = percolation._component_labels(graph, open_idx)
        reach = dist[labels == labels[center]].max()
        hits += reach > rr
    return {"hits": hits, "n": hi - lo}


def _cap_tail_block(args, b, lo, hi):
    graph, a, thresholds, seed = args
    sampler = SpectralSampler(graph)
    center = box_center(graph)
    gop = GreenOperator(DomainMask.full(graph))
    boundary = graph.kill > 0
    g_cc = gop.green(center, center)
    exceed = np.zeros(len(thresholds), dtype=np.int64)
    tt = np.asarray(thresholds, dtype=float)
    censored = 0
    for i in range(lo, hi):
        values = sampler.sample(stream(seed, i, "field"))
        open_idx = sample_open_edges(graph, values, a, stream(seed, i, "edges"))
        labels = percolation._component_labels(graph, open_idx)
        K = np.flatnonzero(labels == labels[center])
        if boundary[K].any():
            # the cluster leaves the window: its capacity is only known to be
            # at least the window's; count it above every threshold
            exceed += 1
            censored += 1
            continue
        cap = 1.0 / g_cc if len(K) == 1 else equilibrium_measure(gop, K).capacity
        exceed += cap > tt
    return {"exceed": exceed, "n": hi - lo, "censored": censored}


# ---------------------------------------------------------------- handlers

def _h_gff(cfg, workers):
    g = build_graph(cfg.graph)
    sampler = SpectralSampler(g)
    center = box_center(g)
    rows = []
    for i in range(cfg.samples):
        v = sampler.sample(stream(cfg.seed, i, "field"))
        rows.append({"sample": i, "center_value": v[center],
                     "min": v.min(), "max": v.max(),
                     "mean": v.mean(), "emp_var": v.var()})
    gop = GreenOperator(DomainMask.full(g))
    return rows, {"center_variance_exact": gop.green(center, center)}


def _h_one_arm(cfg, workers):
    g = build_graph(cfg.graph)
    a = float(cfg.params.get("a", 0.0))
    radii = sorted(int(r) for r in cfg.params["radii"])
    tally = _run_blocks(_one_arm_block, (g, a, radii, cfg.seed), cfg.samples, workers)
    rows, ps = [], []
    for r, h in zip(radii, tally.get("hits", np.zeros(len(radii)))):
        est = percolation.ObservableEstimate.from_bernoulli(int(h), cfg.samples, cfg.seed)
        rows.append({"R": r, "p": est.estimate, "stderr": est.stderr, "hits": int(h)})
        ps.append(est.estimate)
    extras = {}
    if cfg.samples and sum(1 for p in ps if p > 0) >= 3:
        f = fit_exponent(radii, ps)
        extras["fit"] = {"slope": f.slope, "intercept": f.intercept, "band": list(f.band)}
    return rows, extras


def _h_two_point(cfg, workers):
    g = build_graph(cfg.graph)
    a = float(cfg.params.get("a", 0.0))
    rows = []
    for j, (x, y) in enumerate(cfg.params["pairs"]):
        est = percolation.truncated_two_point(g, a, int(x), int(y), cfg.samples,
                                              cfg.seed + j)
        rows.append({"x": int(x), "y": int(y), "p": est.estimate, "stderr": est.stderr})
    return rows, {}


def _h_arcsin(cfg, workers):
    g = build_graph(cfg.graph)
    pairs = [(int(x), int(y)) for x, y in cfg.params["pairs"]]
    res = percolation.arcsin_validation(g, pairs, cfg.samples, cfg.seed)
    rows = [{"x": r["pair"][0], "y": r["pair"][1], "target": r["target"],
             "p": r["estimate"].estimate, "stderr": r["estimate"].stderr,
             "z": r["z"]} for r in res]
    return rows, {"max_abs_z": max((abs(r["z"]) for r in rows), default=0.0)}


def _h_cap_tail(cfg, workers):
    g = build_graph(cfg.graph)
    a = float(cfg.params.get("a", 0.0))
    thresholds = [float(t) for t in cfg.params["thresholds"]]
    tally = _run_blocks(_cap_tail_block, (g, a, thresholds, cfg.seed),
                        cfg.samples, workers)
    rows, ps = [], []
    for t, h in zip(thresholds, tally.get("exceed", np.zeros(len(thresholds)))):
        est = percolation.ObservableEstimate.from_bernoulli(int(h), cfg.samples, cfg.seed)
        rows.append({"t": t, "p_exceed": est.estimate, "stderr": est.stderr})
        ps.append(est.estimate)
    extras = {"censored": int(tally.get("censored", 0))}
    if cfg.samples and sum(1 for p in ps if p > 0) >= 3:
        f = fit_exponent(thresholds, ps)
        extras["fit"] = {"slope": f.slope, "intercept": f.intercept, "band": list(f.band)}
    return rows, extras


def _h_cap_scan(cfg, workers):
    out = capacity_scaling_scan(int(cfg.params.get("dim", 3)),
                                [int(r) for r in cfg.params["radii"]],
                                side=cfg.params.get("side"))
    rows = [{"R": r, "cap": c} for r, c in out["rows"]]
    return rows, {"slope": out["slope"], "note": out.get("note", "")}


def _h_tube(cfg, workers):
    p = cfg.params
    out = tube_capacity(int(p["side"]), int(p["R"]), int(p["ell"]),
                        C=float(p.get("C", 1.0)))
    return [out], {}


def _h_loops(cfg, workers):
    g = build_graph(cfg.graph)
    dom = DomainMask.from_vertices(g, cfg.params["domain"]) \
        if "domain" in cfg.params else DomainMask.full(g)
    n_max = int(cfg.params.get("n_max", 8))
    alpha = float(cfg.params.get("alpha", 0.5))
    lm = LoopMeasure(dom, n_max)
    counts, _ = sample_loop_ensemble(lm, alpha, cfg.samples, stream(cfg.seed, 0, "soup")) \
        if cfg.samples else (np.zeros((0, n_max + 1), dtype=np.int64), None)
    rows = []
    for n in range(2, n_max + 1):
        c = counts[:, n] if cfg.samples else np.zeros(0)
        rows.append({"n": n, "analytic_mean": alpha * lm.masses[n],
                     "emp_mean": float(c.mean()) if cfg.samples else float("nan"),
                     "emp_var": float(c.var(ddof=1)) if cfg.samples > 1 else float("nan")})
    return rows, {"total_mass": alpha * lm.total_mass, "tail": alpha * lm.tail}


def _h_restriction(cfg, workers):
    g = build_graph(cfg.graph)
    dom = DomainMask.from_vertices(g, cfg.params["domain"])
    sub = DomainMask.from_vertices(g, cfg.params["subdomain"])
    rows = restriction_property_test(dom, sub, float(cfg.params.get("alpha", 0.5)),
                                     int(cfg.params.get("n_max", 8)),
                                     cfg.samples, cfg.seed)
    return rows, {"max_abs_z": max((abs(r["z_pair"]) for r in rows), default=0.0)}


def _h_crossing(cfg, workers):
    g = build_graph(cfg.graph)
    dom = DomainMask.from_vertices(g, cfg.params["domain"]) \
        if "domain" in cfg.params else DomainMask.full(g)
    n_max = int(cfg.params.get("n_max", 20))
    alpha = float(cfg.params.get("alpha", 0.5))
    lm = LoopMeasure(dom, n_max)
    rows = []
    for j, (K, M) in enumerate(cfg.params["set_pairs"]):
        K, M = [int(v) for v in K], [int(v) for v in M]
        exact = loop_mass_crossing(dom, K, M)
        trunc = loop_mass_crossing(dom, K, M, n_max=n_max)
        hits = 0
        if cfg.samples:
            _, by_len = sample_loop_ensemble(lm, alpha, cfg.samples,
                                             stream(cfg.seed, j, "soup"))
            for n, (paths, soup_idx) in by_len.items():
                cross = (np.isin(paths, K).any(axis=1)
                         & np.isin(paths, M).any(axis=1))
                hits += np.bincount(soup_idx[cross], minlength=cfg.samples).clip(max=1).sum()
        target = 1.0 - np.exp(-alpha * trunc)
        est = percolation.ObservableEstimate.from_bernoulli(int(hits), cfg.samples,
                                                            cfg.seed) \
            if cfg.samples else None
        rows.append({"K": K, "M": M, "mass_exact": exact, "mass_truncated": trunc,
                     "p_target": target,
                     "p_hat": est.estimate if est else float("nan"),
                     "z": ((est.estimate - target) / est.stderr
                           if est and est.stderr > 0 else 0.0)})
    return rows, {}


def _h_vacancy(cfg, workers):
    g = build_graph(cfg.graph)
    p = cfg.params
    center = int(p.get("center", box_center(g)))
    W = ball(g, center, int(p["window_radius"]))
    halo = ball(g, center, int(p["halo_radius"]))
    K = ball(g, center, int(p.get("k_radius", 1)))
    rows = vacancy_test(g, W, halo, K, [float(u) for u in p["u_values"]],
                        cfg.samples, cfg.seed)
    extras = halo_bias_report(g, K, ball(g, center, int(p["halo_radius"]) // 2), halo)
    return rows, {"halo_bias": extras}


def _h_obstacle(cfg, workers):
    g = build_graph(cfg.graph)
    p = cfg.params
    if "obstacle_file" in p:
        obstacle = set(int(t) for t in open(p["obstacle_file"]).read().split())
    else:
        obstacle = set(int(v) for v in p.get("obstacle", []))
    rep = good_obstacle_check(g, obstacle, int(p["L"]), int(p["R"]),
                              int(p["n"]), float(p["kappa"]),
                              base=int(p.get("base", 0)))
    rows = [{"site": int(y), "good": int(s)} for y, s in zip(rep.sites, rep.scores)]
    return rows, {"minimal_count": rep.minimal_count, "verdict": bool(rep.verdict)}


_HANDLERS = {
    "gff": _h_gff, "one_arm": _h_one_arm, "two_point": _h_two_point,
    "arcsin": _h_arcsin, "cap_tail": _h_cap_tail, "cap_scan": _h_cap_scan,
    "tube": _h_tube, "loops": _h_loops, "restriction": _h_restriction,
    "crossing": _h_crossing, "vacancy": _h_vacancy, "obstacle": _h_obstacle,
}


def run(config, workers=1, out_dir=None):
    """Run one experiment: dispatch, deterministic merge, CSV + manifest."""
    config.validate()
    t0 = time.time()
    rows, extras = _HANDLERS[config.kind](config, workers)
    manifest = RunManifest(
        config=json.loads(config.to_json()), seed=config.seed, workers=workers,
        block=BLOCK, solver_tol=1e-10, extras=_plain(extras),
        wall_clock_s=time.time() - t0)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_csv(os.path.join(out_dir, f"{config.kind}_results.csv"), rows)
        with open(os.path.join(out_dir, f"{config.kind}_manifest.json"), "w") as f:
            f.write(manifest.to_json())
    return rows, manifest


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def write_csv(path, rows):
    """Rows of dicts to CSV with a stable header; repeatable byte-for-byte."""
    if not rows:
        with open(path, "w", newline="") as f:
            f.write("")
        return
    cols = list(rows[0].keys())
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=cols)
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k)) for k in cols})


def _fmt(v):
    if isinstance(v, float) or isinstance(v, np.floating):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (list, tuple, np.ndarray)):
        return " ".join(str(t) for t in np.asarray(v).tolist())
    return v
