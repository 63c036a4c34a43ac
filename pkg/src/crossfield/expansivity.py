"""Expansivity diagnostics through the intersection of stable and unstable sets."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import (_track, nontrivial_stable_continuum, reversed_sections, stable_point_check,
                       stable_set)
from .flow import Flow
from .sections import SectionField
from .space import Circle, FlatTorus2, diameter_of


@dataclass
class Witness:
    """Two distinct points that shadow each other in both time directions."""
    x: np.ndarray
    y: np.ndarray
    delta: float
    horizon: float

    def replay(self, flow: Flow, H: SectionField, dt: float | None = None) -> tuple[bool, bool]:
        """Re-track ``y`` forward and backward from ``x``; both must stay in ``H_delta``."""
        dt = H.tau / 8 if dt is None else dt
        fwd = _track(flow, H.shrink(self.delta), self.x, self.y[None, :], self.horizon, dt)
        R = reversed_sections(H).shrink(self.delta)
        bwd = _track(R.flow, R, self.x, self.y[None, :], self.horizon, dt)
        K = fwd.dist.shape[1] - 1
        return bool(fwd.alive[0] > K), bool(bwd.alive[0] > K)


@dataclass
class ExpansivityReport:
    flow: str
    delta_grid: list
    worst: list
    horizon: float
    verdict: str
    delta_star: float | None = None
    witness: Witness | None = None
    resolution: float = 0.0
    rows: list = field(default_factory=list)

    def summary(self) -> str:
        if self.verdict == "ExpansiveAtHorizon":
            return f"ExpansiveAtHorizon(delta*={self.delta_star:g}, T={self.horizon:g})"
        if self.verdict == "NotExpansive":
            w = self.witness
            return f"NotExpansive(x={w.x.tolist()}, y={w.y.tolist()}, T={self.horizon:g})"
        return f"Inconclusive(T={self.horizon:g})"


def _flow_id(flow: Flow) -> str:
    return f"{type(flow).__name__} on {flow.space.to_config()}"


def _intersection(flow, H, R, x, delta, T, res):
    """Members of the stable set that also track backward, and vice versa."""
    ws = stable_set(flow, H, x, delta, T, res)
    wu = stable_set(R.flow, R, x, delta, T, res)
    dt = ws.dt
    back = _track(R.flow, R.shrink(delta), ws.base, ws.members.points, T, dt)
    fwd = _track(flow, H.shrink(delta), wu.base, wu.members.points, T, dt)
    K = back.dist.shape[1] - 1
    pts = np.concatenate([ws.members.points[back.alive > K], wu.members.points[fwd.alive > K]])
    return ws.base, pts


def expansive_scan(flow: Flow, H: SectionField, domain, delta_grid, T: float,
                   resolution: float | None = None) -> ExpansivityReport:
    """Scan ``delta`` for trivial intersections of stable and unstable sets at horizon ``T``.

    ``ExpansiveAtHorizon(delta*)`` reports the largest ``delta`` such that every
    grid value up to it gives intersections of diameter at most twice the
    resolution at all sampled points.  When the smallest ``delta`` already
    fails, the farthest intersection point becomes a witness and is replayed.
    """
    space = flow.space
    res = resolution if resolution is not None else H.resolution
    grid = sorted(float(d) for d in delta_grid)
    R = reversed_sections(H)
    dom = np.atleast_2d(np.asarray(domain, dtype=float))
    worst, rows = [], []
    witness = None
    for d in grid:
        w, far = 0.0, None
        for x in dom:
            base, pts = _intersection(flow, H, R, x, d, T, res)
            diam = diameter_of(space, pts) if len(pts) > 1 else 0.0
            rows.append((d, base.tolist(), diam, len(pts)))
            w = max(w, diam)
            if len(pts) > 1:
                dx = space.dist(base[None, :], pts)
                i = int(np.argmax(dx))
                if dx[i] > 2 * res and (far is None or dx[i] > far[0]):
                    far = (dx[i], base, pts[i])
        worst.append(w)
        if witness is None and far is not None and d == grid[0]:
            witness = Witness(far[1], far[2], d, float(T))
    ok = [w <= 2 * res for w in worst]
    if ok[0]:
        n = ok.index(False) if False in ok else len(ok)
        return ExpansivityReport(_flow_id(flow), grid, worst, float(T), "ExpansiveAtHorizon",
                                 grid[n - 1], resolution=res, rows=rows)
    if witness is not None and all(witness.replay(flow, H)):
        return ExpansivityReport(_flow_id(flow), grid, worst, float(T), "NotExpansive",
                                 witness=witness, resolution=res, rows=rows)
    return ExpansivityReport(_flow_id(flow), grid, worst, float(T), "Inconclusive", resolution=res,
                             rows=rows)


@dataclass
class PositiveExpansivityReport:
    flow: str
    delta: float
    horizon: float
    diameters: list
    positive: bool
    expected: bool

    @property
    def consistent(self) -> bool:
        # only unions of circles carry positively expansive flows
        return self.positive == self.expected


def positive_expansive_check(flow: Flow, H: SectionField, domain, delta: float, T: float,
                             resolution: float | None = None) -> PositiveExpansivityReport:
    """Whether every sampled stable set is a single point at horizon ``T``."""
    space = flow.space
    res = resolution if resolution is not None else H.resolution
    diams = []
    for x in np.atleast_2d(np.asarray(domain, dtype=float)):
        ws = stable_set(flow, H, x, delta, T, res)
        P = ws.members.points
        diams.append(diameter_of(space, P) if len(P) > 1 else 0.0)
    positive = all(d <= 2 * res for d in diams)
    return PositiveExpansivityReport(_flow_id(flow), float(delta), float(T), diams, positive,
                                     isinstance(space, Circle))


@dataclass
class ObstructionReport:
    flow: str
    surface: bool
    circle: bool
    expansive: bool
    stable_points: list
    continua: list
    interior: list
    consistent: bool
    narrative: list


def _interior(space, x, P, res) -> bool:
    """``x`` sits strictly inside the continuum: it has members on two sides."""
    if len(P) < 3:
        return False
    dx = space.dist(x[None, :], P)
    far = P[dx > res]
    if len(far) < 2:
        return False
    D = space.dist(far[:, None, :], far[None, :, :])
    dxf = dx[dx > res]
    return bool((D > np.maximum(dxf[:, None], dxf[None, :])).any())


def planar_obstruction_demo(flow: Flow, H: SectionField, domain, eps: float, T: float,
                            resolution: float | None = None) -> ObstructionReport:
    """Put the expansivity, stable-point and stable-continuum verdicts side by side.

    On a surface, expansivity would force a nontrivial stable continuum; such
    a continuum fills an arc of the section around the base point, which
    makes that point stable.  So an expansive verdict and a stable-point
    verdict must not occur together there.  The circle is exempt (its stable
    continua are trivial) and the statement says nothing in dimension three.
    """
    space = flow.space
    res = resolution if resolution is not None else H.resolution
    dom = np.atleast_2d(np.asarray(domain, dtype=float))
    scan = expansive_scan(flow, H, dom, [eps / 2], T, res)
    expansive = scan.verdict == "ExpansiveAtHorizon"
    grid = [eps / 2, eps / 4, max(eps / 8, 2 * res)]
    stable = [stable_point_check(flow, H, x, eps, grid, T).stable for x in dom]
    continua, interior = [], []
    for x in dom:
        c = nontrivial_stable_continuum(flow, H, x, eps, eps / 2, T, res)
        continua.append(c.diameter)
        ss = stable_set(flow, H, x, eps, T, res)
        interior.append(_interior(space, ss.base, ss.members.points, res))
    surface = isinstance(space, FlatTorus2)
    circle = isinstance(space, Circle)
    lines = [f"expansive verdict: {scan.summary()}",
             f"stable points at {sum(stable)} of {len(stable)} sampled points",
             f"stable continuum diameters: {', '.join(f'{d:.4g}' for d in continua)}"]
    if surface:
        consistent = not (expansive and any(stable))
        if any(interior):
            lines.append("the stable continuum contains an arc of the section around its base point")
        lines.append("surface: expansivity and stable points exclude each other"
                     + (" (consistent)" if consistent else " (VIOLATED)"))
    elif circle:
        consistent = True
        lines.append("circle: sections are points, so stability and expansivity coexist")
    else:
        consistent = True
        lines.append(f"dimension {space.dim}: the surface argument does not apply")
    return ObstructionReport(_flow_id(flow), surface, circle, expansive, stable, continua, interior,
                             consistent, lines)
