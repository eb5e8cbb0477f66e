"""Log-log exponent fits with jackknife confidence bands."""

from dataclasses import dataclass

import numpy as np


@dataclass
class ExponentFit:
    slope: float
    intercept: float
    band: tuple          # (lo, hi), jackknife 2-sigma
    stderr: float
    excluded: list       # x values dropped because p <= 0


def _ls(lx, ly):
    A = np.vstack([lx, np.ones_like(lx)]).T
    sol = np.linalg.lstsq(A, ly, rcond=None)[0]
    return float(sol[0]), float(sol[1])


def fit_exponent(xs, ps, stderrs=None):
    """Unweighted least squares on (log x, log p); zero-probability points are
    excluded and reported, never smoothed."""
    xs = np.asarray(xs, float)
    ps = np.asarray(ps, float)
    good = ps > 0
    excluded = xs[~good].tolist()
    xs, ps = xs[good], ps[good]
    if len(xs) < 3:
        raise ValueError("need at least 3 points with p > 0")
    lx, ly = np.log(xs), np.log(ps)
    slope, intercept = _ls(lx, ly)
    n = len(xs)
    loo = np.array([_ls(np.delete(lx, i), np.delete(ly, i))[0] for i in range(n)])
    se = float(np.sqrt((n - 1) / n * ((loo - loo.mean()) ** 2).sum()))
    return ExponentFit(slope, intercept, (slope - 2 * se, slope + 2 * se), se, excluded)
