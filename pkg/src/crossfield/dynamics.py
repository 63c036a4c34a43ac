"""Sectional flow, stable and unstable sets at a finite horizon, and recurrence diagnostics.

Every verdict here is "at horizon T": trajectories are followed for a finite
time only, and membership in a stable set means the companion stayed in the
moving section up to that time.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .flow import Flow
from .forms import OneForm
from .space import (CompactSample, Circle, adjacency_components, diameter_of, make_sample,
                    point_to_set, thin)
from .sections import SectionField, _speed

BISECT_WIDTH = 1e-13
BISECT_MAX = 48


def reversed_sections(H: SectionField) -> SectionField:
    """The same section sets seen by the inverse flow.

    The kernel of a form does not depend on the direction of time; only the
    sign of its derivative does.  Evaluations are shared with ``H``.
    """
    base = H.parent if H.parent is not None else H
    flow = base.flow.inverse()
    form = base.form
    rform = None
    if form is not None:
        if form.unit_derivative:
            rform = OneForm(flow, lambda X, Y, f=form: -f._raw(X, Y), name=f"-{form.name}",
                            unit_derivative=True)
        else:
            deriv = None
            if form._derivative is not None:
                deriv = lambda X, Y, f=form: -f._derivative(X, Y)  # noqa: E731
            rform = OneForm(flow, form._raw, deriv, name=f"{form.name}(reversed)")
    R = SectionField(flow, rform, base.rho, base.tau, base.resolution, base.gamma, base.eps_mono,
                     base.symmetry, base.symmetry_delta, radius=base.radius, builder=base.builder,
                     candidates=base.candidates, regularity=base.regularity,
                     meta=dict(base.meta, reversed=True))
    R._cache = base._cache
    R._gamma = base._gamma
    R._stable = base._stable
    if H.parent is not None:
        return R.shrink(H.radius)
    return R


@dataclass
class SectionalTrajectory:
    base: np.ndarray
    companion: np.ndarray
    times: np.ndarray
    h: np.ndarray
    companions: np.ndarray
    status: str
    escaped_at: float | None = None

    @property
    def tracked(self) -> bool:
        return self.status == "tracked"


@dataclass
class _Tracks:
    times: np.ndarray          # (K+1,)
    bases: np.ndarray          # (K+1, d), or (m, K+1, d) with one base per companion
    comps: np.ndarray          # (m, K+1, d), NaN once lost
    h: np.ndarray              # (m, K+1)
    dist: np.ndarray           # (m, K+1) distance companion-base
    alive: np.ndarray          # (m,) number of steps with a companion (index of loss)


def _track(flow: Flow, H: SectionField, x, Y, T: float, dt: float,
           stop_beyond: float | None = None) -> _Tracks:
    """Follow companions ``Y`` of ``x`` through ``H`` for ``t`` in ``[0, T]``.

    ``x`` is either one base point or one base per companion; in the second
    case ``bases`` has shape ``(m, K + 1, d)``.  With ``stop_beyond``, a
    companion is no longer followed after the first step where it is farther
    than that from its base.
    """
    space = flow.space
    K = max(1, math.ceil(T / dt - 1e-9))
    times = np.minimum(np.arange(K + 1) * dt, T)
    m = len(Y)
    x = np.asarray(x, dtype=float)
    per_row = x.ndim == 2
    if per_row:
        bases = flow.evolve(np.repeat(x, K + 1, axis=0), np.tile(times, m)).reshape(m, K + 1, -1)
    else:
        bases = flow.evolve(np.broadcast_to(x, (K + 1, space.dim)), times)
    comps = np.full((m, K + 1, space.dim), np.nan)
    h = np.full((m, K + 1), np.nan)
    dist = np.full((m, K + 1), np.nan)
    comps[:, 0] = Y
    h[:, 0] = 0.0
    dist[:, 0] = space.dist(x if per_row else x[None, :], Y)
    alive = np.full(m, K + 1)
    live = np.arange(m)
    cur = np.array(Y, dtype=float, copy=True)
    hh = np.zeros(m)
    for k in range(1, K + 1):
        if len(live) == 0:
            break
        bk = bases[live, k] if per_row else bases[k]
        landed, s, ok = H.project(bk, cur[live])
        lost = live[~ok]
        alive[lost] = k
        live_ok = live[ok]
        cur[live_ok] = landed[ok]
        hh[live_ok] = hh[live_ok] + s[ok]
        comps[live_ok, k] = landed[ok]
        h[live_ok, k] = hh[live_ok]
        dk = space.dist(bk[ok] if per_row else bk[None, :], landed[ok])
        dist[live_ok, k] = dk
        live = live_ok
        if stop_beyond is not None:
            far = ~(dk <= stop_beyond * (1 + 1e-9))
            alive[live[far]] = k + 1
            live = live[~far]
    return _Tracks(times, bases, comps, h, dist, alive)


def _default_dt(H: SectionField, dt):
    if dt is None:
        return H.tau / 8
    if not dt > 0:
        raise DomainError("dt must be positive")
    return float(dt)


def sectional_flow(flow: Flow, H: SectionField, x, y, T: float, dt: float | None = None) -> SectionalTrajectory:
    """Track ``y`` in ``H(phi_t x)`` with the reparametrization ``h``; ``h(0) = 0``."""
    space = flow.space
    x = space.canonical(space.check_point(x))
    y = space.canonical(space.check_point(y))
    if T < 0:
        raise DomainError("use the inverse flow for negative horizons")
    dt = _default_dt(H, dt)
    if H.gamma and dt * _speed(flow) >= H.gamma / 2:
        raise DomainError(f"step {dt} too large for the flow-box margin {H.gamma}")
    if not H.contains(x, y[None, :])[0] and space.dist(x, y) > 1e-12:
        raise DomainError(f"{y.tolist()} is not on the section through {x.tolist()}")
    tr = _track(flow, H, x, y[None, :], T, dt)
    k = int(tr.alive[0])
    if k > len(tr.times) - 1:
        return SectionalTrajectory(x, y, tr.times, tr.h[0], tr.comps[0], "tracked")
    return SectionalTrajectory(x, y, tr.times[:k], tr.h[0, :k], tr.comps[0, :k], "escaped",
                               float(tr.times[k]))


@dataclass
class StableSetSample:
    base: np.ndarray
    horizon: float
    eps: float
    members: CompactSample
    h_final: np.ndarray
    dt: float
    seeds: int = 0
    refined: int = 0
    label: str = "at horizon"
    _flow: Flow | None = field(default=None, repr=False)
    _H: SectionField | None = field(default=None, repr=False)

    def images_at(self, t: float) -> np.ndarray:
        """Companions of all members at time ``t <= horizon``."""
        if t < 0 or t > self.horizon + 1e-12:
            raise DomainError("time outside [0, horizon]")
        tr = _track(self._flow, self._H, self.base, self.members.points, t, self.dt) if t > 0 else None
        if tr is None:
            return self.members.points.copy()
        return tr.comps[:, -1]


def _midpoints(space, P, M):
    disp = space.displacement(P, M) if hasattr(space, "displacement") else (M - P)
    return space.canonical(P + 0.5 * disp)


def _opposite(space, tp, tq, ip, iq, bases):
    """Whether two tracked companions sit on opposite sides of the base orbit.

    They are compared at the first step where one of them is out (or the last
    step where both still exist): the base lies between them when they are
    farther from each other than either is from the base.
    """
    n, K1 = tp.shape[:2]
    both = ~np.isnan(tp[:, :, 0]) & ~np.isnan(tq[:, :, 0])
    steps = np.arange(K1)
    cap = np.minimum(np.minimum(ip, iq), K1 - 1)
    ok = both & (steps[None, :] <= cap[:, None])
    k = np.where(ok.any(axis=1), K1 - 1 - np.argmax(ok[:, ::-1], axis=1), 0)
    rows = np.arange(n)
    cp, cq, b = tp[rows, k], tq[rows, k], bases[k]
    return space.dist(cp, cq) > np.maximum(space.dist(cp, b), space.dist(cq, b))


def _first_exceed(tr: _Tracks, eps: float) -> np.ndarray:
    """Index of the first step where a companion is lost or farther than ``eps``."""
    over = ~(tr.dist <= eps * (1 + 1e-9))
    idx = np.where(over.any(axis=1), over.argmax(axis=1), tr.dist.shape[1])
    return idx


def stable_set(flow: Flow, H: SectionField, x, eps: float, T: float, resolution: float | None = None,
               dt: float | None = None, refine: bool = True, extension: float = 20.0) -> StableSetSample:
    """Points of ``H_eps(x)`` whose companions stay in ``H_eps(phi_t x)`` up to ``T``.

    Seeds are the net of ``H_eps(x)``.  With ``refine``, neighbouring seeds
    that leave on opposite sides of the base orbit are bisected (following
    them beyond the horizon to tell the sides apart) down to a width of
    ``1e-13``; the limit points lie on the stable set and are added when they
    stay until ``T``.  Members for a larger ``T`` are a subset of those for a
    smaller one.
    """
    space = flow.space
    x = space.canonical(space.check_point(x))
    if not eps > 0 or T < 0:
        raise DomainError("need eps > 0 and T >= 0")
    res = resolution if resolution is not None else H.resolution
    dt = _default_dt(H, dt)
    # results are deterministic, so repeated requests share one computation
    root = H.parent if H.parent is not None else H
    key = (bool(H.meta.get("reversed")), H.radius, tuple(x.tolist()), eps, T, res, dt, refine,
           extension)
    if flow is H.flow and key in root._stable:
        return root._stable[key]
    out = _stable_set(flow, H, x, eps, T, res, dt, refine, extension)
    if flow is H.flow:
        root._stable[key] = out
    return out


def _stable_set(flow, H, x, eps, T, res, dt, refine, extension):
    space = flow.space
    He = H.shrink(eps)
    wide = H.shrink(max(H.radius, eps))
    seeds = He(x).points
    K_T = max(1, math.ceil(T / dt - 1e-9))
    tr = _track(flow, He, x, seeds, T, dt)
    kept = tr.alive > K_T
    members = [seeds[kept]]
    finals = [tr.h[kept, -1]]
    n_refined = 0
    if refine and len(seeds) > 1 and not kept.all():
        T_ext = max(T, extension)
        ext_dt = max(dt, wide.tau / 2)
        tw = _track(flow, wide, x, seeds, T_ext, ext_dt, stop_beyond=eps)
        esc = _first_exceed(tw, eps)
        K_ext = tw.dist.shape[1]
        leaving = esc < K_ext
        D = space.dist(seeds[:, None, :], seeds[None, :, :])
        ii, jj = np.nonzero(np.triu(D <= 2.01 * res, 1))
        both = leaving[ii] & leaving[jj]
        ii, jj = ii[both], jj[both]
        if len(ii):
            opp = _opposite(space, tw.comps[ii], tw.comps[jj], esc[ii], esc[jj], tw.bases)
            P, M = seeds[ii[opp]], seeds[jj[opp]]
            tp, ep = tw.comps[ii[opp]], esc[ii[opp]]
            done = np.zeros(len(P), dtype=bool)
            Q = P.copy()
            for _ in range(BISECT_MAX):
                act = np.nonzero(~done)[0]
                if len(act) == 0:
                    break
                Qa = _midpoints(space, P[act], M[act])
                if He.form is not None and not He.form.unit_derivative or He.builder is not None:
                    Qa, _, okq = wide.project(x, Qa)
                    if not okq.all():
                        done[act[~okq]] = True
                        act, Qa = act[okq], Qa[okq]
                Q[act] = Qa
                tq = _track(flow, wide, x, Qa, T_ext, ext_dt, stop_beyond=eps)
                eq = _first_exceed(tq, eps)
                stays = eq >= K_ext
                narrow = space.dist(P[act], M[act]) < BISECT_WIDTH
                done[act[stays | narrow]] = True
                go = ~(stays | narrow)
                if not go.any():
                    continue
                a = act[go]
                opp_q = _opposite(space, tp[a], tq.comps[go], ep[a], eq[go], tw.bases)
                # q opposite to p: the stable set lies between p and q
                M[a[opp_q]] = Qa[go][opp_q]
                nq = a[~opp_q]
                P[nq] = Qa[go][~opp_q]
                tp[nq] = tq.comps[go][~opp_q]
                ep[nq] = eq[go][~opp_q]
            n_refined = len(Q)
            if len(Q):
                tq = _track(flow, He, x, Q, T, dt)
                ok = tq.alive > K_T
                members.append(Q[ok])
                finals.append(tq.h[ok, -1])
    pts = np.concatenate([x[None, :]] + members)
    hf = np.concatenate([[tr.h[0, -1] if kept[0] else T]] + finals)
    # drop repeats of x and coincident refinements
    keep_idx = [0]
    for i in range(1, len(pts)):
        if space.dist(pts[i][None, :], pts[keep_idx]).min() > 1e-12:
            keep_idx.append(i)
    sample = CompactSample(pts[keep_idx], res)
    return StableSetSample(x, float(T), float(eps), sample, hf[keep_idx], dt, len(seeds), n_refined,
                           _flow=flow, _H=He)


def unstable_set(flow: Flow, H: SectionField, x, eps: float, T: float, **kw) -> StableSetSample:
    """Stable set of the inverse flow through the same sections."""
    return stable_set(flow.inverse(), reversed_sections(H), x, eps, T, **kw)


@dataclass
class DecayReport:
    rows: list
    slope: float | None
    members: int


def diam_decay(flow: Flow, H: SectionField, x, delta: float, T_grid, resolution: float | None = None,
               dt: float | None = None) -> DecayReport:
    """Diameter of the tracked stable set at each time of the grid, with the log-slope.

    The stable set is computed at 1.5 times the largest grid time so that
    members still carrying an unstable component have already been removed.
    """
    T_grid = sorted(float(t) for t in T_grid)
    horizon = 1.5 * T_grid[-1] if T_grid[-1] > 0 else 0.0
    ss = stable_set(flow, H, x, delta, horizon, resolution, dt)
    dt = ss.dt
    tr = _track(flow, ss._H, ss.base, ss.members.points, T_grid[-1], dt)
    rows = []
    for t in T_grid:
        k = int(np.argmin(np.abs(tr.times - t)))
        if abs(tr.times[k] - t) > 1e-9:
            imgs = _track(flow, ss._H, ss.base, ss.members.points, t, dt).comps[:, -1]
        else:
            imgs = tr.comps[:, k]
        imgs = imgs[~np.isnan(imgs[:, 0])]
        rows.append((t, diameter_of(flow.space, imgs) if len(imgs) > 1 else 0.0))
    slope = None
    good = [(t, d) for t, d in rows if d > 0]
    if len(good) >= 2:
        ts, ds = np.array(good).T
        slope = float(np.polyfit(ts, np.log(ds), 1)[0])
    return DecayReport(rows, slope, len(ss.members))


@dataclass
class KatoReport:
    initial_diameter: float
    final_diameter: float
    max_diameter: float
    precondition_met: bool
    bound_holds: bool
    escaped: list
    notes: str = ""


def kato_window(flow: Flow, H: SectionField, x, C, s: float, delta: float, eps: float,
                resolution: float | None = None, dt: float | None = None) -> KatoReport:
    """Largest diameter of ``Phi_t(x, C)`` on ``[0, s]`` for a small tracked continuum ``C``."""
    space = flow.space
    x = space.canonical(space.check_point(x))
    P = C.points if isinstance(C, CompactSample) else np.atleast_2d(C)
    res = resolution if resolution is not None else H.resolution
    dt = _default_dt(H, dt)
    notes = []
    if len(P) > 1 and len(set(adjacency_components(space, P, 2 * res))) > 1:
        notes.append("C is not connected at twice the resolution")
    if point_to_set(space, x[None, :], P)[0] > 1e-12:
        notes.append("x is not in C")
    tr = _track(flow, H, x, P, s, dt)
    K = tr.dist.shape[1] - 1
    escaped = [P[i].tolist() for i in range(len(P)) if tr.alive[i] <= K]
    diams = []
    for k in range(K + 1):
        pts = tr.comps[:, k]
        pts = pts[~np.isnan(pts[:, 0])]
        diams.append(diameter_of(space, pts) if len(pts) > 1 else 0.0)
    d0, d1 = diams[0], diams[-1]
    pre = d0 <= delta and d1 <= delta and not escaped and not notes
    if escaped:
        notes.append(f"{len(escaped)} members left the sections before time {s}")
    if d1 > delta:
        notes.append("final diameter exceeds delta")
    return KatoReport(d0, d1, max(diams), pre, max(diams) <= eps, escaped, "; ".join(notes))


def limit_set(flow: Flow, x, T_max: float, burn_in: float, resolution: float) -> CompactSample:
    """Net of the orbit piece ``phi_[burn_in, T_max](x)`` thinned to the resolution."""
    if not T_max > burn_in:
        raise DomainError("T_max must exceed burn_in")
    space = flow.space
    x = space.canonical(space.check_point(x))
    step = resolution / (2 * _speed(flow))
    n = max(2, math.ceil((T_max - burn_in) / step) + 1)
    ts = np.linspace(burn_in, T_max, n)
    pts = flow.evolve(np.broadcast_to(x, (n, space.dim)), ts)
    return CompactSample(_grid_thin(space, pts, resolution), resolution)


def _grid_thin(space, pts, resolution):
    # bucket by a coarse chart grid first so the greedy pass stays cheap
    cell = np.floor(pts / (resolution / 2)).astype(np.int64)
    _, first = np.unique(cell, axis=0, return_index=True)
    return thin(space, pts[np.sort(first)], resolution)


@dataclass
class StablePointReport:
    x: list
    delta: float
    stable: bool
    asymptotic: bool
    horizon: float
    label: str = "at horizon"


def stable_point_check(flow: Flow, H: SectionField, x, eps: float, delta_grid, T: float,
                       dt: float | None = None) -> StablePointReport:
    """Largest ``delta`` with all of ``H_delta(x)`` tracked inside ``H_eps`` up to ``T``.

    A ``delta`` only counts when ``H_delta(x)`` has points besides ``x``,
    unless the full section at ``x`` is the single point ``x``.
    """
    space = flow.space
    x = space.canonical(space.check_point(x))
    dt = _default_dt(H, dt)
    He = H.shrink(eps)
    trivial = len(H(x)) == 1
    best, asym = 0.0, False
    for d in sorted((float(v) for v in delta_grid), reverse=True):
        if d > eps:
            continue
        seeds = H.shrink(d)(x).points
        if len(seeds) == 1 and not trivial:
            continue
        tr = _track(flow, He, x, seeds, T, dt)
        K = tr.dist.shape[1] - 1
        if (tr.alive > K).all():
            best = d
            d0 = tr.dist[:, 0]
            nz = d0 > 0
            asym = bool(nz.any() and (tr.dist[nz, -1] < 0.1 * d0[nz]).all()) or not nz.any()
            break
    return StablePointReport(x.tolist(), best, best > 0, asym, float(T))


@dataclass
class WanderingReport:
    x: list
    r: float
    wandering: bool
    first_return: float | None
    horizon: float
    label: str = "at horizon"


def wandering_check(flow: Flow, H: SectionField, x, r: float, T: float,
                    resolution: float | None = None) -> WanderingReport:
    """Scan ``t`` in ``(t0, T]`` for returns of ``phi_t(H_r(x))`` into ``H_r(x)``.

    ``t0`` is the larger of the monotonicity window and the section time.  A
    return is a sign change of the section form along a seed orbit whose
    crossing point lies within ``r`` of ``x``.
    """
    space = flow.space
    x = space.canonical(space.check_point(x))
    res = resolution if resolution is not None else H.resolution
    Hr = H.shrink(r)
    seeds = Hr(x).points
    t0 = max(H.eps_mono, H.tau)
    step = res / (2 * _speed(flow))
    ts = np.arange(t0, T + step / 2, step)
    form = H.form
    first = None
    chunk = 512
    prev = None
    for start in range(0, len(ts), chunk):
        tc = ts[max(0, start - 1):start + chunk]
        traj = flow.evolve(seeds[:, None, :], tc)
        if form is not None:
            v = form.value(x, traj)
            a, b = v[:, :-1], v[:, 1:]
            cross = np.isfinite(a) & np.isfinite(b) & (np.sign(a) * np.sign(b) <= 0)
            for i, k in zip(*np.nonzero(cross)):
                if first is not None and tc[k] > first:
                    continue
                j = k if abs(a[i, k]) <= abs(b[i, k]) else k + 1
                landed, s, ok = Hr.project(x, traj[i, j][None, :])
                if ok[0] and tc[j] + s[0] > t0:
                    cand = tc[j] + s[0]
                    first = cand if first is None else min(first, cand)
        else:
            d = point_to_set(space, traj.reshape(-1, space.dim), Hr(x)).reshape(traj.shape[:2])
            hit = np.nonzero((d <= 0.5 * res).any(axis=0))[0]
            if len(hit):
                first = float(tc[hit[0]])
        if first is not None:
            break
    return WanderingReport(x.tolist(), float(r), first is None,
                           None if first is None else float(first), float(T))


@dataclass
class ContinuumReport:
    x: list
    diameter: float
    size: int
    nontrivial: bool
    horizon: float
    label: str = "at horizon"


def nontrivial_stable_continuum(flow: Flow, H: SectionField, x, eps: float, delta: float, T: float,
                                resolution: float | None = None) -> ContinuumReport:
    """Diameter of the net-connected piece of the stable set through ``x``."""
    space = flow.space
    res = resolution if resolution is not None else H.resolution
    ss = stable_set(flow, H, x, eps, T, res)
    P = ss.members.points
    labels = adjacency_components(space, P, 2 * res)
    comp = P[labels == labels[0]]
    diam = diameter_of(space, comp) if len(comp) > 1 else 0.0
    return ContinuumReport(ss.base.tolist(), float(diam), int(len(comp)), diam >= delta, float(T))


def is_circle(space) -> bool:
    return isinstance(space, Circle)
