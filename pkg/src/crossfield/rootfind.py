"""Vectorized bracketing root finder for monotone scalar functions."""
from __future__ import annotations

from typing import Callable

import numpy as np

ROOT_TOL = 1e-9
ROOT_MAX_ITER = 60

# func(s, idx) -> values of the selected elements at their own abscissae s
BatchFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]


def bracketed_root(func: BatchFunction, lo, hi, f_lo=None, f_hi=None,
                   tol: float = ROOT_TOL, max_iter: int = ROOT_MAX_ITER):
    """Roots of per-element functions on per-element brackets ``[lo, hi]``.

    Illinois-modified false position, with a bisection step whenever the
    interpolated point is not strictly inside the bracket.  Elements freeze
    independently once two successive iterates (or the bracket ends) are
    closer than ``tol`` or a zero is hit.  Returns ``(roots, ok)``; ``ok`` is
    False where the bracket has no sign change or a function value is not
    finite, and the root is NaN there.
    """
    lo = np.array(lo, dtype=float, copy=True).ravel()
    hi = np.array(hi, dtype=float, copy=True).ravel()
    n = len(lo)
    idx = np.arange(n)
    f_lo = np.asarray(func(lo, idx), dtype=float) if f_lo is None else np.array(f_lo, dtype=float, copy=True)
    f_hi = np.asarray(func(hi, idx), dtype=float) if f_hi is None else np.array(f_hi, dtype=float, copy=True)
    root = np.full(n, np.nan)
    ok = np.isfinite(f_lo) & np.isfinite(f_hi) & (np.sign(f_lo) * np.sign(f_hi) <= 0)
    at_lo = ok & (f_lo == 0)
    root[at_lo] = lo[at_lo]
    at_hi = ok & (f_hi == 0) & ~at_lo
    root[at_hi] = hi[at_hi]
    live = ok & ~at_lo & ~at_hi
    prev = np.where(np.abs(f_lo) < np.abs(f_hi), lo, hi)
    side = np.zeros(n, dtype=int)  # end replaced last (-1 lo, +1 hi)
    for _ in range(max_iter):
        act = np.nonzero(live)[0]
        if len(act) == 0:
            break
        a, b, fa, fb = lo[act], hi[act], f_lo[act], f_hi[act]
        with np.errstate(divide="ignore", invalid="ignore"):
            c = b - fb * (b - a) / (fb - fa)
        bad = ~np.isfinite(c) | (c <= a) | (c >= b)
        c = np.where(bad, 0.5 * (a + b), c)
        fc = np.asarray(func(c, act), dtype=float)
        nonfinite = ~np.isfinite(fc)
        if nonfinite.any():
            ok[act[nonfinite]] = False
            live[act[nonfinite]] = False
        fin = ~nonfinite
        stop = fin & ((fc == 0) | (np.abs(c - prev[act]) < tol) | (b - a < tol))
        root[act[stop]] = c[stop]
        live[act[stop]] = False
        prev[act] = c
        go = fin & ~stop
        same_lo = go & (np.sign(fc) == np.sign(fa))
        same_hi = go & ~same_lo
        # replace the end whose value has the sign of f(c); Illinois halving on
        # the other end when the same end is replaced twice in a row
        i = act[same_lo]
        lo[i] = c[same_lo]
        f_lo[i] = fc[same_lo]
        rep = side[i] == -1
        f_hi[i[rep]] *= 0.5
        side[i] = -1
        j = act[same_hi]
        hi[j] = c[same_hi]
        f_hi[j] = fc[same_hi]
        rep = side[j] == 1
        f_lo[j[rep]] *= 0.5
        side[j] = 1
    rest = np.nonzero(live)[0]
    root[rest] = 0.5 * (lo[rest] + hi[rest])
    root[~ok] = np.nan
    return root, ok
