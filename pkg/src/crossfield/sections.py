"""Fields of local cross sections: kernels of forms, flow boxes, projections, validators."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import CrossfieldError, DomainError, PreconditionError
from .flow import Flow, certify_regularity
from .forms import (OneForm, antisymmetrize, monotonizing_form, slide_to_kernel, time_form,
                    transverse_time_form, whitney_form)
from .rootfind import bracketed_root
from .space import (CompactSample, FieldOfCompactSets, Regularity, ball, make_sample, net,
                    point_to_set, thin)

MEMBER_TIME_TOL = 1e-7


class Symmetry(enum.Enum):
    SYMMETRIC = "symmetric"
    LOCALLY_SYMMETRIC = "locally_symmetric"
    ASYMMETRIC = "asymmetric"
    UNVERIFIED = "unverified"


def _speed(flow: Flow) -> float:
    return flow.speed if flow.speed else 1.0


@dataclass(eq=False)
class SectionField:
    """A field of local cross sections ``x -> H(x)`` with its parameters.

    Kernel sections are ``B_radius(x)`` intersected with the zero set of
    ``form`` at ``x``, sampled by sliding candidate points along the flow.
    A ``builder`` replaces the kernel recipe (projected fields); a ``parent``
    makes this the restriction of another field to a smaller ball.
    """

    flow: Flow
    form: OneForm | None
    rho: float
    tau: float
    resolution: float
    gamma: float = 0.0
    eps_mono: float = 0.0
    symmetry: Symmetry = Symmetry.UNVERIFIED
    symmetry_delta: float | None = None
    radius: float | None = None
    builder: Callable[[np.ndarray], np.ndarray] | None = None
    candidates: Callable[[np.ndarray], np.ndarray] | None = None
    parent: "SectionField | None" = None
    regularity: Regularity = Regularity.SEMICONTINUOUS
    meta: dict = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False)
    _gamma: dict = field(default_factory=dict, repr=False)
    _stable: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.tau > 0:
            raise DomainError("section time tau must be positive")
        if not self.rho > 0:
            raise DomainError("section thickness rho must be positive")
        if self.radius is None:
            self.radius = self.rho

    @property
    def space(self):
        return self.flow.space

    def __call__(self, x) -> CompactSample:
        x = self.space.canonical(self.space.check_point(x))
        key = tuple(np.round(x, 12).tolist())
        if key not in self._cache:
            self._cache[key] = self._evaluate(x)
        return self._cache[key]

    evaluate = __call__

    def _evaluate(self, x):
        if self.parent is not None:
            P = self.parent(x).points
            keep = self.space.dist(x[None, :], P) <= self.radius * (1 + 1e-9)
            keep[0] = True
            return CompactSample(P[keep], self.resolution)
        if self.builder is not None:
            return make_sample(self.space, self.builder(x), self.resolution)
        sample, gamma = _kernel(self.flow, self.form, self.radius, x, self.resolution,
                                self.tau, self.candidates)
        self._gamma[tuple(np.round(x, 12).tolist())] = gamma
        return sample

    def shrink(self, eps: float) -> "SectionField":
        """``H_eps = B_eps ∩ H``; ``eps = 0`` gives the point field."""
        if eps < 0:
            raise DomainError("eps must be non-negative")
        base = self.parent if self.parent is not None else self
        radius = min(eps, self.radius)
        sub = SectionField(self.flow, self.form, self.rho, self.tau, self.resolution,
                           min(self.gamma, eps) if self.gamma else 0.0, self.eps_mono,
                           self.symmetry, self.symmetry_delta, radius=max(radius, 1e-300),
                           parent=base, regularity=self.regularity,
                           meta=dict(self.meta, shrunk_to=eps))
        return sub

    def contains(self, x, Z) -> np.ndarray:
        """Membership of the points ``Z`` in ``H(x)`` (via the form when there is one)."""
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        x = self.space.canonical(np.asarray(x, dtype=float))
        if self.form is None:
            return point_to_set(self.space, Z, self(x)) <= 0.5 * self.resolution
        _, t, ok = self.project(x, Z)
        return ok & (np.abs(t) <= MEMBER_TIME_TOL)

    def project(self, x, Y):
        """Flow projection of the points ``Y`` into ``H(x)``: ``(points, times, ok)``.

        ``x`` is one point or one base point per row of ``Y``.
        """
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        X = np.broadcast_to(np.asarray(x, dtype=float), Y.shape)
        if self.form is None:
            return self._project_by_net(X, Y)
        s, landed, ok = slide_to_kernel(self.form, X, Y, self.tau)
        dist = self.space.dist(X, landed)
        ok = ok & (dist <= self.radius * (1 + 1e-9))
        return landed, np.where(ok, s, np.nan), ok

    def _project_by_net(self, X, Y):
        speed = _speed(self.flow)
        ts = np.linspace(-self.tau, self.tau, 2 * max(4, math.ceil(self.tau * speed / self.resolution)) + 1)
        out = np.empty_like(Y)
        tt = np.full(len(Y), np.nan)
        ok = np.zeros(len(Y), dtype=bool)
        for i in range(len(Y)):
            traj = self.flow.evolve(np.broadcast_to(Y[i], (len(ts),) + Y[i].shape), ts)
            d = point_to_set(self.space, traj, self(X[i]))
            j = int(np.argmin(np.abs(ts) + 1e3 * (d > 0.5 * self.resolution)))
            if d[j] <= 0.5 * self.resolution:
                out[i], tt[i], ok[i] = traj[j], ts[j], True
            else:
                out[i] = Y[i]
        return out, tt, ok

    def gamma_at(self, x) -> float:
        self(x)
        return self._gamma.get(tuple(np.round(self.space.canonical(x), 12).tolist()), self.radius)

    def as_field(self) -> FieldOfCompactSets:
        return FieldOfCompactSets(self.space, lambda x: self(x), True, self.regularity, "sections")

    def summary(self) -> dict:
        return {"rho": self.rho, "tau": self.tau, "gamma": self.gamma, "eps_mono": self.eps_mono,
                "symmetry": self.symmetry.value, "symmetry_delta": self.symmetry_delta,
                "resolution": self.resolution, "radius": self.radius}


def _kernel(flow, form, rho, x, resolution, tau, candidates=None):
    space = flow.space
    d0 = form.derivative(x[None, :], x[None, :])[0]
    if not np.isfinite(d0) or abs(d0) < 1e-12:
        raise PreconditionError(f"form derivative vanishes at x={x.tolist()}", stage="kernel")
    cand = candidates(x) if candidates is not None else ball(space, x, rho, resolution).points
    cand = np.atleast_2d(cand)
    s, landed, ok = slide_to_kernel(form, x[None, :], cand, tau)
    d = space.dist(x[None, :], landed)
    inside = ok & (d <= rho * (1 + 1e-9))
    dc = space.dist(x[None, :], cand)
    gamma = float(dc[~inside].min()) if (~inside).any() else rho
    pts = np.concatenate([x[None, :], landed[inside]])
    pts = thin(space, pts, 0.5 * resolution)
    return CompactSample(pts, resolution), gamma


def kernel_section(flow: Flow, form: OneForm, rho: float, x, resolution: float,
                   tau: float | None = None, candidates=None) -> CompactSample:
    """Net of ``B_rho(x)`` intersected with the kernel of ``form`` at ``x``.

    Each candidate (by default the ball net) slides along the flow to the zero
    of ``s -> form(x, phi_s y)`` in ``[-tau, tau]``; candidates without a zero
    there, or landing outside the ball, are dropped.
    """
    x = flow.space.canonical(flow.space.check_point(x))
    if tau is None:
        tau = rho / _speed(flow)
    return _kernel(flow, form, rho, x, resolution, tau, candidates)[0]


@dataclass(frozen=True)
class FlowBox(CompactSample):
    gamma: float = 0.0


def flow_box(flow: Flow, H: SectionField, x, resolution: float) -> FlowBox:
    """Net of ``phi_[-tau, tau](H(x))`` with the re-estimated margin ``gamma``."""
    space = flow.space
    x = space.canonical(space.check_point(x))
    S = H(x).points
    steps = max(2, math.ceil(2 * H.tau * _speed(flow) / resolution))
    ts = np.linspace(-H.tau, H.tau, steps + 1)
    pts = flow.evolve(S[:, None, :], ts).reshape(-1, space.dim)
    pts = np.concatenate([x[None, :], pts])
    gamma = 0.0
    r = 0.5 * resolution
    while r <= H.rho + 1e-12:
        b = ball(space, x, r, resolution).points
        if point_to_set(space, b, pts).max() > resolution:
            break
        gamma = r
        r += 0.5 * resolution
    return FlowBox(pts, resolution, gamma)


def flow_project(flow: Flow, H: SectionField, x, y):
    """``(phi_t(y), t)`` with ``phi_t(y)`` in ``H(x)`` and ``|t| <= tau``."""
    y = flow.space.check_point(y)
    pts, t, ok = H.project(x, np.asarray(y, dtype=float)[None, :])
    if not ok[0]:
        raise DomainError(f"point {np.asarray(y).tolist()} is outside the flow box of {np.asarray(x).tolist()}")
    return pts[0], float(t[0])


def project_field(flow: Flow, H: SectionField, N) -> SectionField:
    """The field ``x -> pi_x(N(x))`` of projected neighbourhoods."""
    space = flow.space

    def build(x):
        P = N(x).points
        landed, _, ok = H.project(x, P)
        if not ok.all():
            bad = P[~ok][0]
            raise PreconditionError(
                f"neighbourhood of x={x.tolist()} leaves the flow box at {bad.tolist()}",
                stage="project_field")
        return thin(space, np.concatenate([x[None, :], landed]), 0.5 * H.resolution)

    regularity = getattr(N, "regularity", Regularity.UNKNOWN)
    out = SectionField(flow, H.form, H.rho, H.tau, H.resolution, H.gamma, H.eps_mono,
                       Symmetry.UNVERIFIED, None, radius=H.radius, builder=build,
                       regularity=Regularity.CONTINUOUS if regularity == Regularity.CONTINUOUS
                       else Regularity.SEMICONTINUOUS,
                       meta={"projected_from": getattr(N, "name", "field")})
    return out


# --------------------------------------------------------------------------
# validators


@dataclass
class CrossSectionReport:
    violations: list
    n_pairs: int
    gamma: float

    @property
    def ok(self) -> bool:
        return not self.violations


def check_cross_section(flow: Flow, H, domain, resolution: float,
                        estimate_gamma: bool = True) -> CrossSectionReport:
    """Scan ``[-tau, tau]`` for returns of section points into their own section."""
    space = flow.space
    D = domain.points if isinstance(domain, CompactSample) else np.atleast_2d(domain)
    speed = _speed(flow)
    tau = H.tau
    n = max(8, math.ceil(tau * speed / resolution))
    ts = np.linspace(-tau, tau, 2 * n + 1)
    step = ts[1] - ts[0]
    form = getattr(H, "form", None)
    violations, n_pairs, gamma = [], 0, math.inf
    for x in D:
        x = space.canonical(x)
        Y = H(x).points
        n_pairs += len(Y)
        traj = flow.evolve(Y[:, None, :], ts)                       # (ny, nt, d)
        if form is not None:
            cap = H.radius * (1 + 1e-9)
            vals = form.value(x, traj)
            for i in range(len(Y)):
                v = vals[i]
                for k in range(len(ts) - 1):
                    a, b = v[k], v[k + 1]
                    if not (np.isfinite(a) and np.isfinite(b)) or np.sign(a) * np.sign(b) > 0:
                        continue
                    t, ok = bracketed_root(lambda s, idx: form.value(x, flow.evolve(Y[i], s)),
                                           [ts[k]], [ts[k + 1]], [a], [b])
                    if not ok[0] or abs(t[0]) * speed <= resolution:
                        continue
                    z = flow.evolve(Y[i], t[0])
                    if space.dist(x, z) <= cap:
                        violations.append((x.tolist(), Y[i].tolist(), float(t[0])))
        else:
            far = np.abs(ts) * speed > 2 * resolution
            for i in range(len(Y)):
                d = point_to_set(space, traj[i][far], Y)
                hit = np.nonzero(d <= 0.5 * resolution)[0]
                if len(hit):
                    violations.append((x.tolist(), Y[i].tolist(), float(ts[far][hit[0]])))
        if estimate_gamma:
            gamma = min(gamma, _gamma_probe(flow, H, x, resolution))
    if not estimate_gamma:
        gamma = getattr(H, "gamma", 0.0)
    return CrossSectionReport(violations, n_pairs, float(gamma))


def _gamma_probe(flow, H, x, resolution):
    if hasattr(H, "gamma_at") and H.parent is None and H.builder is None and H.form is not None:
        return H.gamma_at(x)
    rad = getattr(H, "radius", None) or getattr(H, "rho", resolution)
    B = ball(flow.space, x, rad, resolution).points
    if not hasattr(H, "project"):
        return 0.0
    _, _, ok = H.project(x, B)
    d = flow.space.dist(x[None, :], B)
    return float(d[~ok].min()) if (~ok).any() else float(rad)


@dataclass
class MonotoneReport:
    eps_mono: float
    violations: list
    per_eps: dict

    @property
    def ok(self) -> bool:
        return self.eps_mono > 0


def check_monotone(flow: Flow, H, domain, eps_grid: Sequence[float],
                   resolution: float | None = None) -> MonotoneReport:
    """Largest ``eps`` in the grid with ``H(x)`` and ``H(phi_t x)`` disjoint for ``0 < t <= eps``.

    With a form, disjointness means no point of ``H(phi_t x)`` is already on
    ``H(x)`` (zero projection time).  Without one, the nets must stay two
    resolutions apart.
    """
    space = flow.space
    D = domain.points if isinstance(domain, CompactSample) else np.atleast_2d(domain)
    eps_grid = sorted(float(e) for e in eps_grid)
    if not eps_grid:
        raise DomainError("eps_grid must be non-empty")
    res = resolution if resolution is not None else getattr(H, "resolution", None)
    if res is None:
        raise DomainError("resolution required")
    step = res / _speed(flow)
    ts = np.arange(1, math.floor(eps_grid[-1] / step + 1e-9) + 1) * step
    if len(ts) == 0 or ts[0] > eps_grid[0]:
        ts = np.concatenate([[eps_grid[0]], ts])
    form = getattr(H, "form", None)
    first_bad = math.inf
    violations = []
    for x in D:
        x = space.canonical(x)
        for t in ts:
            if t >= first_bad:
                break
            Z = H(flow.evolve(x, t)).points
            if form is not None and hasattr(H, "contains"):
                clash = H.contains(x, Z)
            else:
                clash = point_to_set(space, Z, H(x)) < 2 * res
            if clash.any():
                violations.append((x.tolist(), float(t)))
                first_bad = min(first_bad, t)
                break
    per_eps = {e: e < first_bad for e in eps_grid}
    good = [e for e in eps_grid if per_eps[e]]
    eps_mono = max(good) if good else 0.0
    if hasattr(H, "eps_mono"):
        H.eps_mono = eps_mono
    return MonotoneReport(eps_mono, violations, per_eps)


@dataclass
class SymmetryReport:
    defect: float
    form_defect: float
    status: Symmetry
    delta: float
    n_pairs: int

    @property
    def ok(self) -> bool:
        return self.status in (Symmetry.SYMMETRIC, Symmetry.LOCALLY_SYMMETRIC)


def check_symmetric(H, domain, delta: float, tolerance: float, max_pairs: int | None = None,
                    space=None) -> SymmetryReport:
    """For sampled ``y`` in ``H(x)`` within ``delta``: is ``x`` in ``H(y)``?

    The net defect is the distance from ``x`` to the net of ``H(y)``.  For
    fields defined by a form, the form defect is the flow distance that moves
    ``x`` onto the kernel at ``y``.
    """
    space = space or H.space
    D = domain.points if isinstance(domain, CompactSample) else np.atleast_2d(domain)
    form = getattr(H, "form", None)
    defect, fdefect, n = 0.0, 0.0, 0
    for x in D:
        x = space.canonical(x)
        Y = H(x).points
        d = space.dist(x[None, :], Y)
        Y = Y[(d <= delta) & (d > 0)]
        if max_pairs is not None and len(Y) > max_pairs:
            Y = Y[np.linspace(0, len(Y) - 1, max_pairs).round().astype(int)]
        for y in Y:
            n += 1
            defect = max(defect, float(point_to_set(space, x[None, :], H(y))[0]))
        if form is not None and len(Y) and hasattr(H, "project"):
            _, t, ok = H.project(Y, np.broadcast_to(x, Y.shape))
            speed = _speed(H.flow)
            fd = np.where(ok, np.abs(t) * speed, np.inf)
            fdefect = max(fdefect, float(fd.max()))
    if defect <= tolerance:
        rho = getattr(H, "radius", None) or getattr(H, "rho", math.inf)
        status = Symmetry.SYMMETRIC if delta >= rho else Symmetry.LOCALLY_SYMMETRIC
    else:
        status = Symmetry.ASYMMETRIC
    if hasattr(H, "symmetry"):
        H.symmetry = status
        H.symmetry_delta = delta
    return SymmetryReport(defect, fdefect, status, float(delta), n)


# --------------------------------------------------------------------------
# constructions


def leaf_sections(flow: Flow, rho: float, resolution: float, tau: float | None = None) -> SectionField:
    """Sections cut out by the closed-form transverse foliation of a built-in flow."""
    speed = _speed(flow)
    if tau is None:
        tau = min(2 * rho / speed, 0.25 * flow.min_period)
    form = transverse_time_form(flow, radius=max(4 * rho, 2 * speed * tau))
    H = SectionField(flow, form, rho, tau, resolution, gamma=rho, symmetry=Symmetry.SYMMETRIC,
                     symmetry_delta=rho, meta={"recipe": "transverse foliation"})
    return H


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except PreconditionError:
        raise
    except CrossfieldError as exc:
        raise PreconditionError(str(exc), stage=name) from exc


def build_monotone_symmetric_sections(flow: Flow, net_resolution: float, t_grid: Sequence[float], *,
                                      rho_grid: Sequence[float] | None = None,
                                      validation_points: int = 4, seed: int = 0,
                                      whitney_panels: int = 4, mono_panels: int = 4,
                                      symmetry_pairs: int = 4) -> SectionField:
    """Monotone, symmetric cross sections from the distance function of the space.

    Stages: regularity certificate, averaged distance form, its kernel
    sections, the unit-derivative time form, the monotonizing form, its
    antisymmetrization and finally the kernel sections of that form, whose
    thickness is the largest grid value passing all three validators on a
    few net points.  The quadratures use fixed panel counts so every form in
    the chain depends continuously on its arguments.
    """
    space = flow.space
    cert = _stage("regularity", certify_regularity, flow, net_resolution, t_grid)
    t_hat, a = cert.t_hat, cert.separation
    speed = _speed(flow)
    tau0 = min(t_hat / 4, flow.min_period / 2)
    rho0 = a / 4
    omega0 = _stage("whitney", whitney_form, flow, t_hat, panels=whitney_panels,
                    adaptive=False, radius=2 * rho0)
    H0 = SectionField(flow, omega0, rho0, tau0, net_resolution, meta={"stage": "kernel"})
    omega1 = _stage("time_form", time_form, flow, H0)
    t_hat2 = tau0 / 2
    v1 = _stage("monotonizing", monotonizing_form, flow, omega1, t_hat2,
                panels=mono_panels, adaptive=False)
    omega2 = _stage("antisymmetrize", antisymmetrize, v1)
    tau = tau0 - t_hat2

    if rho_grid is None:
        rho_grid = [f * space.diameter for f in (0.2, 0.1, 0.05, 0.025, 0.0125)]
    rho_grid = sorted((r for r in rho_grid if r <= rho0), reverse=True)
    if not rho_grid:
        raise PreconditionError("no thickness in the grid fits the certified separation",
                                stage="sections")
    rng = np.random.default_rng(seed)
    pool = net(space, net_resolution).points
    domain = pool[np.sort(rng.choice(len(pool), size=min(validation_points, len(pool)), replace=False))]

    last_error = None
    for rho in rho_grid:
        reach = min(rho0, 1.5 * rho)

        def cand(x, reach=reach):
            return _kernel(flow, omega0, reach, x, net_resolution, tau0, None)[0].points

        H = SectionField(flow, omega2, rho, tau, net_resolution, candidates=cand,
                         meta={"recipe": "pipeline", "t_hat": t_hat, "separation": a,
                               "tau0": tau0, "rho0": rho0, "t_hat2": t_hat2})
        try:
            cross = check_cross_section(flow, H, domain, net_resolution)
            mono = check_monotone(flow, H, domain, [tau / 4, tau / 2, tau], net_resolution)
            sym = check_symmetric(H, domain, rho, 2 * net_resolution, max_pairs=symmetry_pairs)
        except CrossfieldError as exc:
            last_error = exc
            continue
        if cross.ok and mono.ok and sym.ok:
            H.gamma = cross.gamma
            H.meta.update({"validation_domain": domain.tolist(), "cross_section": len(cross.violations),
                           "symmetry_defect": sym.defect, "forms": {
                               "whitney": omega0, "time": omega1, "monotonizing": v1,
                               "antisymmetric": omega2}, "kernel0": H0})
            return H
        last_error = (cross, mono, sym)
    raise PreconditionError(f"no thickness passed the validators (last: {last_error})", stage="sections")
