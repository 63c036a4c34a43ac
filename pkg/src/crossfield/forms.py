"""Topological 1-forms: scalar pairings ``omega(x, y)`` vanishing on the diagonal.

A form is evaluated in batches: ``x`` and ``y`` broadcast against each other
and the result has their common leading shape.  Outside its domain a form
returns NaN from :meth:`OneForm.value`; the checked entry point
:meth:`OneForm.__call__` raises :class:`DomainError` instead.
"""
from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .errors import DomainError
from .flow import CatSuspensionFlow, CircleRotation, Flow, InverseFlow, TorusLinear
from .quadrature import simpson_batch
from .rootfind import bracketed_root

RawForm = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _pairs(x, y, dim):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[-1] != dim or y.shape[-1] != dim:
        raise DomainError(f"points must have {dim} coordinates")
    shape = np.broadcast_shapes(x.shape[:-1], y.shape[:-1])
    X = np.broadcast_to(x, shape + (dim,)).reshape(-1, dim)
    Y = np.broadcast_to(y, shape + (dim,)).reshape(-1, dim)
    return X, Y, shape


class OneForm:
    """A 1-form with an optional analytic flow derivative.

    ``raw(X, Y)`` receives flat ``(n, dim)`` arrays.  ``derivative`` (same
    signature) is the derivative of ``y -> omega(x, y)`` along the flow;
    without it :meth:`derivative` falls back to a central difference.
    ``unit_derivative`` marks forms whose flow derivative is identically 1.
    """

    def __init__(self, flow: Flow, raw: RawForm, derivative: RawForm | None = None, *,
                 name: str = "form", unit_derivative: bool = False,
                 transpose_derivative: RawForm | None = None, transpose_of: "OneForm | None" = None):
        self.flow = flow
        self.space = flow.space
        self._raw = raw
        self._derivative = derivative
        self._transpose_derivative = transpose_derivative
        self.name = name
        self.unit_derivative = unit_derivative
        self._transpose = transpose_of

    def value(self, x, y) -> np.ndarray:
        X, Y, shape = _pairs(x, y, self.space.dim)
        if len(X) == 0:
            return np.empty(shape)
        return np.asarray(self._raw(X, Y), dtype=float).reshape(shape)

    def __call__(self, x, y):
        out = self.value(x, y)
        bad = ~np.isfinite(out)
        if np.any(bad):
            X, Y, _ = _pairs(x, y, self.space.dim)
            i = int(np.argmax(bad.ravel()))
            raise DomainError(f"{self.name} undefined at x={X[i].tolist()}, y={Y[i].tolist()}")
        return out

    def derivative(self, x, y, dt: float | None = None) -> np.ndarray:
        if self.unit_derivative:
            v = self.value(x, y)
            return np.where(np.isfinite(v), 1.0, np.nan)
        if self._derivative is not None:
            X, Y, shape = _pairs(x, y, self.space.dim)
            return np.asarray(self._derivative(X, Y), dtype=float).reshape(shape)
        return central_difference(self, x, y, dt)

    @property
    def T(self) -> "OneForm":
        if self._transpose is None:
            self._transpose = OneForm(
                self.flow, lambda X, Y: self._raw(Y, X), self._transpose_derivative,
                name=f"{self.name}^T", transpose_derivative=self._derivative, transpose_of=self)
        return self._transpose

    def __repr__(self):
        return f"OneForm({self.name})"


def default_dt(flow: Flow) -> float:
    speed = flow.speed if flow.speed else 1.0
    return 1e-4 / speed


def central_difference(form: OneForm, x, y, dt: float | None = None) -> np.ndarray:
    dt = default_dt(form.flow) if dt is None else float(dt)
    fwd = form.value(x, form.flow.evolve(y, dt))
    bwd = form.value(x, form.flow.evolve(y, -dt))
    return (fwd - bwd) / (2 * dt)


def form_derivative(flow: Flow, form: OneForm, x, y, dt: float | None = None):
    """Central difference of ``t -> omega_x(phi_t y)`` at ``t = 0``."""
    if dt is not None and not dt > 0:
        raise DomainError("dt must be positive")
    out = central_difference(form, x, y, dt)
    if not np.all(np.isfinite(out)):
        raise DomainError("flow-shifted point left the domain of the form")
    return out


def transpose_form(form: OneForm) -> OneForm:
    return form.T


def distance_form(flow: Flow) -> OneForm:
    space = flow.space
    return OneForm(flow, lambda X, Y: space.dist(X, Y), name="dist")


def whitney_form(flow: Flow, t_hat: float, base: OneForm | None = None, *,
                 panels: int = 16, tol: float = 1e-9, max_panels: int = 2 ** 14,
                 adaptive: bool = True, radius: float = math.inf) -> OneForm:
    """Average of the base form along the orbit, recentred to vanish at ``y = x``.

    ``omega_x(y) = int_0^t_hat v_x(phi_s y) ds - int_0^t_hat v_x(phi_s x) ds``
    with derivative ``v_x(phi_t_hat y) - v_x(y)``.  Pairs farther apart than
    ``radius`` are outside the domain.
    """
    if not t_hat > 0:
        raise DomainError("t_hat must be positive")
    base = base or distance_form(flow)
    space = flow.space

    def raw(X, Y):
        inside = space.dist(X, Y) <= radius
        out = np.full(len(X), np.nan)
        Xi, Yi = X[inside], Y[inside]

        def integrand(s, idx):
            xs = Xi[idx][:, None, :]
            return (base.value(xs, flow.evolve(Yi[idx][:, None, :], s))
                    - base.value(xs, flow.evolve(xs, s)))

        out[inside] = simpson_batch(integrand, 0.0, t_hat, len(Xi), panels=panels,
                                    tol=tol, max_panels=max_panels, adaptive=adaptive)
        return out

    def deriv(X, Y):
        d = base.value(X, flow.evolve(Y, t_hat)) - base.value(X, Y)
        return np.where(space.dist(X, Y) <= radius, d, np.nan)

    return OneForm(flow, raw, deriv, name=f"whitney({base.name}, {t_hat:g})")


def slide_to_kernel(form: OneForm, X, Y, tau: float, scan: int = 8):
    """Flow times ``s`` in ``[-tau, tau]`` with ``form(X, phi_s Y) = 0``.

    Returns ``(s, landed, ok)``.  The bracket ``[-tau, tau]`` is tried first;
    elements without a usable sign change there are rescanned on a grid and
    the sign change closest to ``s = 0`` is refined.
    """
    flow = form.flow
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    X, Y = np.broadcast_arrays(X, Y)
    n = len(Y)
    if form.unit_derivative:
        s = -form.value(X, Y)
        ok = np.isfinite(s) & (np.abs(s) <= tau)
        s = np.where(ok, s, np.nan)
        landed = flow.evolve(Y, np.where(ok, s, 0.0))
        return s, landed, ok

    def g(s, idx):
        return form.value(X[idx], flow.evolve(Y[idx], s))

    lo = np.full(n, -tau)
    hi = np.full(n, tau)
    idx = np.arange(n)
    f_lo = g(lo, idx)
    f_hi = g(hi, idx)
    good = np.isfinite(f_lo) & np.isfinite(f_hi) & (np.sign(f_lo) * np.sign(f_hi) <= 0)
    retry = np.nonzero(~good)[0]
    if len(retry):
        grid = np.linspace(-tau, tau, 2 * scan + 1)
        vals = np.stack([g(np.full(len(retry), t), retry) for t in grid], axis=1)
        for j, i in enumerate(retry):
            v = vals[j]
            pairs = [k for k in range(2 * scan)
                     if np.isfinite(v[k]) and np.isfinite(v[k + 1]) and np.sign(v[k]) * np.sign(v[k + 1]) <= 0]
            if not pairs:
                continue
            k = min(pairs, key=lambda k: min(abs(grid[k]), abs(grid[k + 1])))
            lo[i], hi[i], f_lo[i], f_hi[i] = grid[k], grid[k + 1], v[k], v[k + 1]
    s, ok = bracketed_root(g, lo, hi, f_lo, f_hi)
    landed = flow.evolve(Y, np.where(ok, s, 0.0))
    return s, landed, ok


def time_form(flow: Flow, section) -> OneForm:
    """Form with derivative 1: the flow time from the section through x to y.

    ``section`` supplies ``form`` (a form increasing or decreasing along the
    flow), ``rho`` and ``tau``; ``omega_x(y) = t`` where ``phi_{-t}(y)`` lies in
    the kernel of ``section.form`` at ``x`` within distance ``rho``.
    """
    base = section.form
    rho, tau = section.rho, section.tau
    space = flow.space

    def raw(X, Y):
        s, landed, ok = slide_to_kernel(base, X, Y, tau)
        ok &= space.dist(X, np.where(ok[:, None], landed, X)) <= rho * (1 + 1e-9)
        return np.where(ok, -s, np.nan)

    return OneForm(flow, raw, name=f"time({base.name})", unit_derivative=True)


def monotonizing_form(flow: Flow, form: OneForm, t_hat: float, *, panels: int = 16,
                      tol: float = 1e-9, max_panels: int = 2 ** 14, adaptive: bool = True) -> OneForm:
    """``v_x(y) = int_0^t_hat form(phi_s y, x) ds + t_hat**2 / 2`` for a unit-derivative form.

    The transpose of the result has constant derivative ``t_hat`` along the
    flow and ``v_x(x) = 0``.
    """
    if not t_hat > 0:
        raise DomainError("t_hat must be positive")
    half_sq = 0.5 * t_hat * t_hat

    def raw(X, Y):
        def integrand(s, idx):
            ys = flow.evolve(Y[idx][:, None, :], s)
            return form.value(ys, X[idx][:, None, :])

        return simpson_batch(integrand, 0.0, t_hat, len(X), panels=panels, tol=tol,
                             max_panels=max_panels, adaptive=adaptive) + half_sq

    def deriv(X, Y):
        return form.value(flow.evolve(Y, t_hat), X) - form.value(Y, X)

    def tderiv(X, Y):
        return np.full(len(X), t_hat)

    return OneForm(flow, raw, deriv, name=f"monotonizing({form.name}, {t_hat:g})",
                   transpose_derivative=tderiv)


def antisymmetrize(v: OneForm) -> OneForm:
    """``omega = v - v^T``; exactly antisymmetric in floating point."""

    def raw(X, Y):
        n = len(X)
        both = v._raw(np.concatenate([X, Y]), np.concatenate([Y, X]))
        return both[:n] - both[n:]

    deriv = None
    if v._derivative is not None and v._transpose_derivative is not None:
        def deriv(X, Y):
            return v._derivative(X, Y) - v._transpose_derivative(X, Y)

    return OneForm(v.flow, raw, deriv, name=f"antisym({v.name})")


def transverse_time_form(flow: Flow, radius: float | None = None) -> OneForm:
    """Closed-form unit-derivative form for the built-in flows.

    Its kernel at ``x`` is the piece of the leaf through ``x`` of a foliation
    transverse to the flow: the point itself on the circle, the perpendicular
    line on the torus and the horizontal fibre on the suspension.
    """
    base = flow.base if isinstance(flow, InverseFlow) else flow
    sign = -1.0 if isinstance(flow, InverseFlow) else 1.0
    space = flow.space
    if isinstance(base, CircleRotation):
        rate = base.rate
        limit = radius if radius is not None else 0.25 * space.circumference

        def raw(X, Y):
            d = space.displacement(X, Y)[:, 0]
            return np.where(np.abs(d) <= limit, sign * d / rate, np.nan)
    elif isinstance(base, TorusLinear):
        e = base.direction
        limit = radius if radius is not None else 0.25 * min(space.periods)

        def raw(X, Y):
            d = space.displacement(X, Y)
            w = d[:, 0] * e[0] + d[:, 1] * e[1]
            return np.where(np.hypot(d[:, 0], d[:, 1]) <= limit, sign * w, np.nan)
    elif isinstance(base, CatSuspensionFlow):
        limit = radius if radius is not None else 0.4

        def raw(X, Y):
            ds = space.displacement(X, Y)[:, 2]
            ok = space.dist(X, Y) <= limit
            return np.where(ok, sign * ds, np.nan)
    else:
        raise DomainError(f"no closed-form transverse foliation for {flow!r}")
    return OneForm(flow, raw, name=f"leaf({flow.kind})", unit_derivative=True)
