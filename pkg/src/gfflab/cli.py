"""Command line front end.

Every subcommand accepts --config FILE (JSON, see ExperimentConfig), --seed N,
--workers N and --out DIR; flag values override the config file.  Results land
as CSV plus a JSON manifest in the output directory.
"""

from __future__ import annotations

import argparse
import json
import sys

from .explab import ExperimentConfig, run, write_csv
from .fitting import fit_exponent

# subcommand -> experiment kinds it may dispatch (the first is the default)
_KINDS = {
    "gff": ["gff"],
    "perc": ["one_arm", "two_point", "arcsin", "cap_tail"],
    "loops": ["loops", "restriction", "crossing"],
    "ri": ["vacancy"],
    "cap": ["cap_scan", "tube"],
    "obstacle": ["obstacle"],
}


def _add_common(p):
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--seed", type=int, help="master seed (overrides config)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="output directory for CSV + manifest")
    p.add_argument("--samples", type=int, help="sample count (overrides config)")


def _load_config(args, default_kind, allowed):
    if args.config:
        cfg = ExperimentConfig.load(args.config)
        if cfg.kind not in allowed:
            raise SystemExit(f"config kind {cfg.kind!r} not valid here "
                             f"(expected one of {allowed})")
    else:
        cfg = ExperimentConfig(kind=default_kind)
    if getattr(args, "mode", None):
        cfg.kind = args.mode
    if args.seed is not None:
        cfg.seed = args.seed
    if args.samples is not None:
        cfg.samples = args.samples
    return cfg


def main(argv=None):
    ap = argparse.ArgumentParser(prog="gfflab",
                                 description="Gaussian free field percolation lab")
    sub = ap.add_subparsers(dest="command", required=True)

    for name, kinds in _KINDS.items():
        p = sub.add_parser(name)
        _add_common(p)
        if len(kinds) > 1:
            p.add_argument("--mode", choices=kinds,
                           help=f"experiment kind (default: config kind, else {kinds[0]})")
        if name == "obstacle":
            p.add_argument("--kappa", type=float)
            p.add_argument("--L", type=int)
            p.add_argument("--R", type=int)
            p.add_argument("--n", type=int)

    pf = sub.add_parser("fit", help="power-law fit of a CSV with columns x,p[,stderr]")
    pf.add_argument("csv")
    pf.add_argument("--out")

    pa = sub.add_parser("accept", help="run the acceptance suite")
    _add_common(pa)
    pa.add_argument("--only", type=int, nargs="*", help="criterion numbers to run")
    pa.add_argument("--fast", action="store_true",
                    help="reduced sample counts (smoke run, not the full gate)")

    args = ap.parse_args(argv)

    if args.command == "fit":
        return _cmd_fit(args)
    if args.command == "accept":
        from .acceptance import run_acceptance
        results = run_acceptance(only=args.only, fast=args.fast,
                                 workers=args.workers or 1,
                                 out_dir=args.out)
        return 0 if all(r.passed for r in results) else 1

    cfg = _load_config(args, _KINDS[args.command][0], _KINDS[args.command])
    if args.command == "obstacle":
        for k in ("kappa", "L", "R", "n"):
            v = getattr(args, k)
            if v is not None:
                cfg.params[k] = v
    rows, manifest = run(cfg, workers=args.workers, out_dir=args.out)
    if args.out is None:
        for r in rows[:50]:
            print(json.dumps(r, default=float))
        print(json.dumps(manifest.extras, default=float))
    return 0


def _cmd_fit(args):
    import csv as _csv
    with open(args.csv) as f:
        rows = list(_csv.DictReader(f))
    if not rows:
        raise SystemExit("empty CSV")
    cols = rows[0].keys()
    xcol = "x" if "x" in cols else next(iter(cols))
    pcol = "p" if "p" in cols else [c for c in cols if c != xcol][0]
    xs = [float(r[xcol]) for r in rows]
    ps = [float(r[pcol]) for r in rows]
    se = [float(r["stderr"]) for r in rows] if "stderr" in cols else None
    f = fit_exponent(xs, ps, se)
    out = {"slope": f.slope, "intercept": f.intercept,
           "band": list(f.band), "excluded": list(map(float, f.excluded))}
    print(json.dumps(out))
    if args.out:
        write_csv(args.out, [out])
    return 0


if __name__ == "__main__":
    sys.exit(main())
