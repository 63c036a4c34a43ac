"""Composite Simpson quadrature over batches of integrands.

Every element of a batch is integrated independently: its nodes, its
convergence decision and its summation order never depend on the other
elements, so a value is reproducible bit for bit whatever batch it is
computed in.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

# func(s, idx) -> array (len(idx), len(s)): integrand of the selected elements
BatchIntegrand = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _simpson(vals: np.ndarray, h: float) -> np.ndarray:
    n = vals.shape[-1] - 1
    acc = vals[..., 0] + vals[..., n]
    for i in range(1, n):
        acc = acc + (4.0 if i % 2 else 2.0) * vals[..., i]
    return acc * (h / 3.0)


def simpson_batch(func: BatchIntegrand, a: float, b: float, n_elements: int,
                  panels: int = 16, tol: float = 1e-9, max_panels: int = 2 ** 14,
                  adaptive: bool = True) -> np.ndarray:
    """Integrate ``n_elements`` integrands over ``[a, b]``.

    Starts from ``panels`` panels and, when ``adaptive``, keeps doubling for
    each element until two successive values differ by less than ``tol`` or
    the panel cap is reached; the finer of the two values is returned.
    """
    if panels < 2 or panels % 2:
        raise ValueError("panels must be a positive even integer")
    idx = np.arange(n_elements)
    if n_elements == 0:
        return np.empty(0)
    n = panels
    h = (b - a) / n
    vals = np.asarray(func(a + h * np.arange(n + 1), idx), dtype=float)
    est = _simpson(vals, h)
    if not adaptive or b == a:
        return est
    out = est.copy()
    live = idx.copy()
    while n < max_panels and len(live):
        h2 = h / 2
        mids = a + h2 * (2 * np.arange(n) + 1)
        new = np.asarray(func(mids, live), dtype=float)
        merged = np.empty((len(live), 2 * n + 1))
        merged[:, 0::2] = vals
        merged[:, 1::2] = new
        fine = _simpson(merged, h2)
        out[live] = fine
        diff = np.abs(fine - est)
        keep = ~(diff < tol)
        # non-finite values cannot improve: stop refining them
        keep &= np.isfinite(fine)
        live, vals, est = live[keep], merged[keep], fine[keep]
        n, h = 2 * n, h2
    return out


def simpson(f: Callable[[np.ndarray], np.ndarray], a: float, b: float, **kw) -> float:
    """Scalar convenience wrapper: ``f`` maps an array of nodes to values."""
    return float(simpson_batch(lambda s, idx: np.asarray(f(s))[None, :], a, b, 1, **kw)[0])
