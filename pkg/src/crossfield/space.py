"""Compact metric spaces, finite compact-set samples and fields of compact sets.

Points are plain ``numpy`` coordinate vectors in a space-specific chart; every
space canonicalizes coordinates into a fundamental domain before comparing.
Distances broadcast over leading axes so that whole nets can be compared at
once.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

from .errors import DomainError, ResourceError

DEDUP_EPS = 1e-12


def _lex_order(p, q):
    """Swap pairs so the first argument is lexicographically smaller.

    Makes every distance exactly symmetric in floating point.
    """
    p, q = np.broadcast_arrays(np.asarray(p, dtype=float), np.asarray(q, dtype=float))
    swap = np.zeros(p.shape[:-1], dtype=bool)
    for i in range(p.shape[-1] - 1, -1, -1):
        a, b = p[..., i], q[..., i]
        swap = np.where(a != b, a > b, swap)
    sw = swap[..., None]
    return np.where(sw, q, p), np.where(sw, p, q)


def _apply2(M, x):
    """``x @ M.T`` for 2x2 ``M``, elementwise so results never depend on batch layout."""
    return np.stack([M[0, 0] * x[..., 0] + M[0, 1] * x[..., 1],
                     M[1, 0] * x[..., 0] + M[1, 1] * x[..., 1]], axis=-1)


def _wrap_unit(a):
    """Reduce to [0, 1) without ever returning 1.0."""
    a = np.mod(a, 1.0)
    return np.where(a >= 1.0, 0.0, a)


class MetricSpace:
    """Base class.  Subclasses define ``dim``, ``canonical`` and ``dist``."""

    kind = "abstract"
    dim = 0

    def canonical(self, pts):
        raise NotImplementedError

    def dist(self, p, q):
        raise NotImplementedError

    def grid(self, resolution: float) -> np.ndarray:
        raise NotImplementedError

    def _ball_candidates(self, x, r: float, resolution: float) -> np.ndarray:
        raise NotImplementedError

    def to_config(self) -> dict:
        raise NotImplementedError

    @property
    def diameter(self) -> float:
        if getattr(self, "_diameter", None) is None:
            self._diameter = self._compute_diameter()
        return self._diameter

    def _compute_diameter(self) -> float:
        pts = self.grid(self._diameter_probe_resolution())
        best = 0.0
        for start in range(0, len(pts), 256):
            d = self.dist(pts[start:start + 256, None, :], pts[None, :, :])
            best = max(best, float(d.max()))
        return best

    def _diameter_probe_resolution(self) -> float:
        return 0.1

    def check_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise DomainError(
                f"{self.kind} expects {self.dim} coordinates, got shape {x.shape}")
        return x

    def same_as(self, other) -> bool:
        return type(self) is type(other) and self.to_config() == other.to_config()

    def __eq__(self, other):
        return isinstance(other, MetricSpace) and self.same_as(other)

    def __hash__(self):
        return hash(repr(sorted(self.to_config().items())))

    def __repr__(self):
        params = ", ".join(f"{k}={v}" for k, v in self.to_config().items() if k != "kind")
        return f"{type(self).__name__}({params})"


class Circle(MetricSpace):
    """Circle of the given circumference with the arc-length metric."""

    kind = "circle"
    dim = 1

    def __init__(self, circumference: float = 1.0):
        if not circumference > 0:
            raise ValueError("circumference must be positive")
        self.circumference = float(circumference)
        self._diameter = self.circumference / 2

    def canonical(self, pts):
        pts = np.asarray(pts, dtype=float)
        c = self.circumference
        out = np.mod(pts, c)
        return np.where(out >= c, 0.0, out)

    def dist(self, p, q):
        p, q = _lex_order(p, q)
        c = self.circumference
        a = np.mod(q[..., 0] - p[..., 0], c)
        return np.minimum(a, c - a)

    def displacement(self, p, q):
        c = self.circumference
        a = np.mod(np.asarray(q, float) - np.asarray(p, float), c)
        return np.where(a > c / 2, a - c, a)

    def grid(self, resolution):
        n = max(1, math.ceil(self.circumference / resolution - 1e-9))
        return (np.arange(n) * (self.circumference / n))[:, None]

    def _ball_candidates(self, x, r, resolution):
        k = math.ceil(r / resolution + 1e-9)
        offs = np.arange(-k, k + 1) * resolution
        return self.canonical(x[None, :] + offs[:, None])

    def to_config(self):
        return {"kind": self.kind, "circumference": self.circumference}


class FlatTorus2(MetricSpace):
    """Flat two-torus R^2 / (p1 Z x p2 Z)."""

    kind = "flat_torus2"
    dim = 2

    def __init__(self, periods: Sequence[float] = (1.0, 1.0)):
        periods = tuple(float(p) for p in periods)
        if len(periods) != 2 or min(periods) <= 0:
            raise ValueError("periods must be two positive reals")
        self.periods = periods
        self._per = np.array(periods)
        self._diameter = 0.5 * math.hypot(*periods)

    def canonical(self, pts):
        pts = np.asarray(pts, dtype=float)
        out = np.mod(pts, self._per)
        return np.where(out >= self._per, 0.0, out)

    def displacement(self, p, q):
        d = np.asarray(q, float) - np.asarray(p, float)
        return d - self._per * np.round(d / self._per)

    def dist(self, p, q):
        d = self.displacement(p, q)
        return np.sqrt(d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1])

    def grid(self, resolution):
        axes = [np.arange(n) * (p / n) for p, n in
                ((p, max(1, math.ceil(p / resolution - 1e-9))) for p in self.periods)]
        g = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        return g.reshape(-1, 2)

    def _ball_candidates(self, x, r, resolution):
        k = math.ceil(r / resolution + 1e-9)
        offs = np.arange(-k, k + 1) * resolution
        g = np.stack(np.meshgrid(offs, offs, indexing="ij"), axis=-1).reshape(-1, 2)
        return self.canonical(x[None, :] + g)

    def to_config(self):
        return {"kind": self.kind, "periods": list(self.periods)}


class CatSuspension(MetricSpace):
    """Mapping torus of a hyperbolic toral automorphism.

    Points are ``(x1, x2, s)`` with ``(x, 1)`` glued to ``(A x, 0)``.  The metric
    is the quotient of a gluing-invariant length metric on the cover: moving a
    distance ``du`` along the expanding eigendirection at height ``s`` costs
    ``lam**s * |du|``, along the contracting one ``lam**-s * |dv|``, and
    vertical motion costs ``vertical_scale`` per unit of ``s``.  The closed
    form below is the cheapest path that does its expanding motion at one
    height and its contracting motion at another.  Only the deck images with
    ``k`` in {-1, 0, 1} gluings and neighbouring lattice translates are
    searched, so the value is exact for points that are not far apart.
    """

    kind = "cat_suspension"
    dim = 3

    def __init__(self, matrix=((2, 1), (1, 1)), vertical_scale: float = 1.0):
        A = np.array(matrix, dtype=float)
        if A.shape != (2, 2) or not np.allclose(A, np.round(A)):
            raise ValueError("matrix must be a 2x2 integer matrix")
        det = round(float(np.linalg.det(A)))
        if abs(det) != 1:
            raise ValueError("matrix must be unimodular")
        evals, evecs = np.linalg.eig(A)
        if np.iscomplexobj(evals) or min(abs(evals)) >= 1 - 1e-12:
            raise ValueError("matrix must be hyperbolic")
        order = np.argsort(-np.abs(evals))
        evals = evals[order].real
        evecs = evecs[:, order].real
        self.matrix = tuple(tuple(int(round(v)) for v in row) for row in A)
        self.vertical_scale = float(vertical_scale)
        self.A = np.round(A)
        self.Ainv = np.round(np.linalg.inv(A))
        self.lam = float(abs(evals[0]))
        self.log_lam = math.log(self.lam)
        self.eigvals = evals
        self.eig_right = evecs
        self.to_eigen = np.linalg.inv(evecs)
        self._diameter = None
        self._deck = [np.eye(2), self.Ainv, self.A]  # k = 0, 1, -1: A^{-k}
        self._deck_k = [0, 1, -1]
        self._lattice = np.array([(a, b) for a in range(-2, 3) for b in range(-2, 3)], float)
        self._fast_radius = 0.0
        self._fast_radius = 0.45 * self._systole()

    def _glue(self, x, n):
        """Apply ``A**n`` to fiber coordinates, reducing mod 1 after each factor."""
        x = np.array(x, dtype=float, copy=True)
        n = np.asarray(n)
        nmax = int(np.max(np.abs(n))) if n.size else 0
        for i in range(nmax):
            fwd = n > i
            bwd = n < -i
            if fwd.any():
                x[fwd] = _wrap_unit(_apply2(self.A, x[fwd]))
            if bwd.any():
                x[bwd] = _wrap_unit(_apply2(self.Ainv, x[bwd]))
        return x

    def canonical(self, pts):
        pts = np.array(pts, dtype=float, copy=True)
        shape = pts.shape
        flat = pts.reshape(-1, 3)
        n = np.floor(flat[:, 2]).astype(int)
        s = flat[:, 2] - n
        s = np.where(s >= 1.0, 0.0, s)
        fib = _wrap_unit(flat[:, :2])
        fib = self._glue(fib, n)
        out = np.concatenate([fib, s[:, None]], axis=1)
        return out.reshape(shape)

    def _capped(self, w):
        # moving to a lower (higher) height pays off once the weighted length
        # exceeds 2c / log(lam); the optimal detour then has a closed form
        c = self.vertical_scale
        thr = 2 * c / self.log_lam
        out = w.copy()
        big = w > thr
        if big.any():
            out[big] = thr + thr * np.log(w[big] / thr)
        return out

    def _lift_costs(self, p, q):
        """Costs over the searched deck images, shape (..., 75)."""
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        p, q = np.broadcast_arrays(p, q)
        sp, sq = p[..., 2], q[..., 2]
        L = self.log_lam
        E = self.to_eigen
        off_u = self._lattice[:, 0] * E[0, 0] + self._lattice[:, 1] * E[0, 1]
        off_v = self._lattice[:, 0] * E[1, 0] + self._lattice[:, 1] * E[1, 1]
        costs = []
        for M, k in zip(self._deck, self._deck_k):
            y = _apply2(M, q[..., :2])
            dx = y - p[..., :2]
            base = dx - np.round(dx)
            r = sq + k
            lo = np.minimum(sp, r)
            hi = np.maximum(sp, r)
            vert = self.vertical_scale * (hi - lo)
            eu = base[..., 0] * E[0, 0] + base[..., 1] * E[0, 1]
            ev = base[..., 0] * E[1, 0] + base[..., 1] * E[1, 1]
            wu = np.exp(lo * L)[..., None] * np.abs(eu[..., None] - off_u)
            wv = np.exp(-hi * L)[..., None] * np.abs(ev[..., None] - off_v)
            costs.append(vert[..., None] + (self._capped(wu) + self._capped(wv)))
        return np.concatenate(costs, axis=-1)

    def _natural_cost(self, p, q):
        """Cost of the lift of ``q`` nearest to ``p`` in the chart."""
        k = np.clip(np.round(p[..., 2] - q[..., 2]), -1, 1)
        out = np.empty(p.shape[:-1])
        L = self.log_lam
        E = self.to_eigen
        for M, kk in zip(self._deck, self._deck_k):
            sel = k == kk
            if not sel.any():
                continue
            ps, qs = p[sel], q[sel]
            dx = _apply2(M, qs[..., :2]) - ps[..., :2]
            base = dx - np.round(dx)
            r = qs[..., 2] + kk
            lo = np.minimum(ps[..., 2], r)
            hi = np.maximum(ps[..., 2], r)
            eu = base[..., 0] * E[0, 0] + base[..., 1] * E[0, 1]
            ev = base[..., 0] * E[1, 0] + base[..., 1] * E[1, 1]
            wu = np.exp(lo * L) * np.abs(eu)
            wv = np.exp(-hi * L) * np.abs(ev)
            out[sel] = self.vertical_scale * (hi - lo) + (self._capped(wu) + self._capped(wv))
        return out

    def _systole(self):
        # shortest displacement to a non-trivial deck image, sampled on a grid
        g = self.grid(1 / 10)
        costs = self._lift_costs(g, g)
        ident = self._deck_k.index(0) * len(self._lattice) + len(self._lattice) // 2
        costs[:, ident] = np.inf
        return float(costs.min())

    def dist(self, p, q):
        p, q = _lex_order(p, q)
        shape = p.shape[:-1]
        p = p.reshape(-1, 3)
        q = q.reshape(-1, 3)
        # a lift closer than half the systole is the nearest one, since every
        # other deck image is at least a systole away from it
        out = self._natural_cost(p, q)
        far = out > self._fast_radius
        if far.any():
            out[far] = self._lift_costs(p[far], q[far]).min(axis=-1)
        return out.reshape(shape)

    def nearest_lift(self, p, q):
        """Cover coordinates of the deck image of ``q`` closest to ``p``."""
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        p, q = np.broadcast_arrays(p, q)
        idx = self._lift_costs(p, q).argmin(axis=-1)
        ki, li = np.divmod(idx, len(self._lattice))
        out = np.empty(p.shape)
        for j, (M, k) in enumerate(zip(self._deck, self._deck_k)):
            sel = ki == j
            if not sel.any():
                continue
            y = _apply2(M, q[sel][..., :2])
            dx = y - p[sel][..., :2]
            base = dx - np.round(dx)
            lift = p[sel][..., :2] + base - self._lattice[li[sel]]
            out[sel] = np.concatenate([lift, (q[sel][..., 2] + k)[..., None]], axis=-1)
        return out

    def displacement(self, p, q):
        return self.nearest_lift(p, q) - np.asarray(p, float)

    def grid(self, resolution):
        n = max(1, math.ceil(1.0 / resolution - 1e-9))
        ax = np.arange(n) / n
        g = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1)
        return g.reshape(-1, 3)

    def _diameter_probe_resolution(self):
        return 1 / 8

    def _ball_candidates(self, x, r, resolution):
        # grid adapted to the metric at the height of x: spacing = resolution
        s = float(x[2])
        slack = math.exp(self.log_lam * r / self.vertical_scale)
        hu = resolution * math.exp(-s * self.log_lam)
        hv = resolution * math.exp(s * self.log_lam)
        hs = resolution / self.vertical_scale
        ku = math.ceil(r * slack / resolution + 1e-9)
        ks = math.ceil(r / resolution + 1e-9)
        iu = np.arange(-ku, ku + 1)
        is_ = np.arange(-ks, ks + 1)
        U, V, S = np.meshgrid(iu * hu, iu * hv, is_ * hs, indexing="ij")
        # keep only offsets that can possibly be within r (cheap pre-filter)
        keep = (np.abs(U) * math.exp(s * self.log_lam) / slack
                + np.abs(V) * math.exp(-s * self.log_lam) / slack
                + np.abs(S) * self.vertical_scale) <= r * (1 + 1e-9) + 1e-15
        U, V, S = U[keep], V[keep], S[keep]
        dx = _apply2(self.eig_right, np.stack([U, V], axis=-1))
        pts = np.concatenate([x[None, :2] + dx, (x[2] + S)[:, None]], axis=1)
        return self.canonical(pts)

    def to_config(self):
        return {"kind": self.kind, "matrix": [list(r) for r in self.matrix],
                "vertical_scale": self.vertical_scale}


class GraphMetric(MetricSpace):
    """Metric graph: edges are intervals, distance is shortest path length.

    A point is ``(edge_index, offset)`` with ``0 <= offset <= length``.
    Vertices are canonically represented on their lowest-index incident edge.
    """

    kind = "graph"
    dim = 2

    def __init__(self, n_vertices: int, edges: Sequence[tuple[int, int, float]]):
        if n_vertices < 1 or not edges:
            raise ValueError("graph needs at least one vertex and one edge")
        self.n_vertices = int(n_vertices)
        self.edges = tuple((int(a), int(b), float(w)) for a, b, w in edges)
        for a, b, w in self.edges:
            if not (0 <= a < n_vertices and 0 <= b < n_vertices) or w <= 0:
                raise ValueError(f"bad edge {(a, b, w)}")
        self._ea = np.array([e[0] for e in self.edges])
        self._eb = np.array([e[1] for e in self.edges])
        self._ew = np.array([e[2] for e in self.edges])
        rows = np.concatenate([self._ea, self._eb])
        cols = np.concatenate([self._eb, self._ea])
        w = np.concatenate([self._ew, self._ew])
        mat = csr_matrix((w, (rows, cols)), shape=(n_vertices, n_vertices))
        ncomp, _ = connected_components(mat, directed=False)
        if ncomp != 1:
            raise ValueError("graph must be connected")
        self._vd = shortest_path(mat, directed=False)
        self._vertex_home = {}
        for i, (a, b, _) in enumerate(self.edges):
            self._vertex_home.setdefault(a, (i, 0))
            self._vertex_home.setdefault(b, (i, 1))
        self._diameter = None

    def canonical(self, pts):
        pts = np.array(pts, dtype=float, copy=True)
        shape = pts.shape
        flat = pts.reshape(-1, 2)
        e = np.clip(np.round(flat[:, 0]).astype(int), 0, len(self.edges) - 1)
        off = np.clip(flat[:, 1], 0.0, self._ew[e])
        for i in range(len(flat)):
            v = None
            if off[i] <= 0.0:
                v = self._ea[e[i]]
            elif off[i] >= self._ew[e[i]]:
                v = self._eb[e[i]]
            if v is not None:
                home, end = self._vertex_home[int(v)]
                e[i] = home
                off[i] = 0.0 if end == 0 else self._ew[home]
        return np.stack([e.astype(float), off], axis=1).reshape(shape)

    def dist(self, p, q):
        p, q = _lex_order(p, q)
        ep = np.round(p[..., 0]).astype(int)
        eq = np.round(q[..., 0]).astype(int)
        op, oq = p[..., 1], q[..., 1]
        wp, wq = self._ew[ep], self._ew[eq]
        ends_p = [(self._ea[ep], op), (self._eb[ep], wp - op)]
        ends_q = [(self._ea[eq], oq), (self._eb[eq], wq - oq)]
        best = np.full(p.shape[:-1], np.inf)
        for vp, cp in ends_p:
            for vq, cq in ends_q:
                best = np.minimum(best, cp + self._vd[vp, vq] + cq)
        same = ep == eq
        return np.where(same, np.minimum(best, np.abs(op - oq)), best)

    def grid(self, resolution):
        pts = []
        for i, (_, _, w) in enumerate(self.edges):
            n = max(1, math.ceil(w / resolution - 1e-9))
            for j in range(n + 1):
                pts.append((i, w * j / n))
        pts = self.canonical(np.array(pts))
        _, idx = np.unique(np.round(pts, 12), axis=0, return_index=True)
        return pts[np.sort(idx)]

    def _ball_candidates(self, x, r, resolution):
        return np.concatenate([x[None, :], self.grid(resolution)])

    def to_config(self):
        return {"kind": self.kind, "n_vertices": self.n_vertices,
                "edges": [list(e) for e in self.edges]}


def space_from_config(cfg: dict) -> MetricSpace:
    kind = cfg.get("kind")
    if kind == "circle":
        return Circle(float(cfg.get("circumference", 1.0)))
    if kind == "flat_torus2":
        return FlatTorus2(tuple(cfg.get("periods", (1.0, 1.0))))
    if kind == "cat_suspension":
        return CatSuspension(cfg.get("matrix", ((2, 1), (1, 1))),
                             float(cfg.get("vertical_scale", 1.0)))
    if kind == "graph":
        return GraphMetric(int(cfg["n_vertices"]), [tuple(e) for e in cfg["edges"]])
    raise DomainError(f"unknown space kind {kind!r}")


# --------------------------------------------------------------------------
# compact samples


@dataclass(frozen=True)
class CompactSample:
    """A finite net standing for a compact set.

    Every point of the intended set lies within ``resolution`` of a listed
    point.  Build through :func:`make_sample` to get canonical, deduplicated
    coordinates.
    """

    points: np.ndarray
    resolution: float

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.shape[0] == 0:
            raise DomainError("a compact sample must be non-empty")
        if not self.resolution > 0:
            raise DomainError("resolution must be positive")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)


def dedup(space: MetricSpace, pts, eps: float = DEDUP_EPS) -> np.ndarray:
    """Drop points closer than ``eps`` to an earlier point (order preserved)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if len(pts) <= 1:
        return pts
    # cheap pre-pass: only points with a near neighbour need the ordered scan
    near = np.zeros(len(pts), dtype=bool)
    for s in range(0, len(pts), 256):
        d = space.dist(pts[s:s + 256, None, :], pts[None, :, :])
        d[np.arange(d.shape[0]), np.arange(s, s + d.shape[0])] = np.inf
        near[s:s + 256] = d.min(axis=1) < eps
    if not near.any():
        return pts
    keep = np.ones(len(pts), dtype=bool)
    for i in np.nonzero(near)[0]:
        earlier = np.nonzero(keep[:i])[0]
        if len(earlier) and space.dist(pts[i][None, :], pts[earlier]).min() < eps:
            keep[i] = False
    return pts[keep]


def make_sample(space: MetricSpace, pts, resolution: float, deduplicate: bool = True) -> CompactSample:
    pts = space.canonical(np.atleast_2d(np.asarray(pts, dtype=float)))
    if deduplicate:
        pts = dedup(space, pts)
    return CompactSample(pts, resolution)


def _as_points(K) -> np.ndarray:
    if isinstance(K, CompactSample):
        return K.points
    return np.atleast_2d(np.asarray(K, dtype=float))


def dist(space: MetricSpace, p, q):
    """Distance between points (or broadcastable arrays of points)."""
    p = space.check_point(p)
    q = space.check_point(q)
    return space.dist(p, q)


def point_to_set(space: MetricSpace, P, K, block: int = 2048) -> np.ndarray:
    """Distance from each point of ``P`` to the finite set ``K``."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    K = _as_points(K)
    out = np.empty(len(P))
    step = max(1, block * 64 // max(len(K), 1))
    for s in range(0, len(P), step):
        out[s:s + step] = space.dist(P[s:s + step, None, :], K[None, :, :]).min(axis=1)
    return out


def _directed_hausdorff(space, A, B, block=256):
    # running-max with row elimination: a row whose running minimum already
    # drops to the current max can never raise it
    cmax = 0.0
    for start in range(0, len(A), block):
        rows = A[start:start + block]
        mins = np.full(len(rows), np.inf)
        active = np.ones(len(rows), dtype=bool)
        for bs in range(0, len(B), block):
            if not active.any():
                break
            d = space.dist(rows[active][:, None, :], B[None, bs:bs + block, :])
            mins[active] = np.minimum(mins[active], d.min(axis=1))
            active &= mins > cmax
        if active.any():
            cmax = max(cmax, float(mins[active].max()))
    return cmax


def hausdorff(space: MetricSpace, K, L) -> float:
    """Hausdorff distance between two finite samples (exact on the samples)."""
    A = _as_points(K)
    B = _as_points(L)
    if len(A) == 0 or len(B) == 0:
        raise DomainError("hausdorff distance needs non-empty samples")
    return max(_directed_hausdorff(space, A, B), _directed_hausdorff(space, B, A))


def hausdorff_bruteforce(space: MetricSpace, K, L) -> float:
    """O(nm) reference: every pairwise distance, one row at a time, no pruning."""
    A = _as_points(K)
    B = _as_points(L)
    if len(A) == 0 or len(B) == 0:
        raise DomainError("hausdorff distance needs non-empty samples")

    def directed(P, Q):
        worst = 0.0
        for p in P:
            worst = max(worst, float(space.dist(p[None, :], Q).min()))
        return worst

    return max(directed(A, B), directed(B, A))


def net(space: MetricSpace, resolution: float) -> CompactSample:
    """Uniform chart grid standing for the whole space."""
    if not resolution > 0:
        raise DomainError("resolution must be positive")
    if resolution < 1e-6 * space.diameter:
        raise ResourceError(f"resolution {resolution} too fine for {space!r}")
    return CompactSample(space.canonical(space.grid(resolution)), resolution)


def ball(space: MetricSpace, x, r: float, resolution: float) -> CompactSample:
    """Net of the closed ball of radius ``r`` around ``x``; always contains ``x``."""
    x = space.canonical(space.check_point(x))
    if r < 0:
        raise DomainError("radius must be non-negative")
    if not resolution > 0:
        raise DomainError("resolution must be positive")
    if r == 0:
        return CompactSample(x[None, :], resolution)
    cand = space._ball_candidates(x, r, resolution)
    d = space.dist(x[None, :], cand)
    inside = cand[d <= r * (1 + 1e-12)]
    pts = np.concatenate([x[None, :], inside])
    d0 = space.dist(x[None, :], pts)
    pts = np.concatenate([x[None, :], pts[1:][d0[1:] > DEDUP_EPS]])
    return CompactSample(pts, resolution)


def one_parameter_neighborhoods(space: MetricSpace, r: float, x, resolution: float) -> CompactSample:
    """Geodesic ball of radius ``r * diameter``: a point at 0, everything at 1."""
    if not 0 <= r <= 1:
        raise DomainError("parameter must lie in [0, 1]")
    x = space.canonical(space.check_point(x))
    if r == 0:
        return CompactSample(x[None, :], resolution)
    if r == 1:
        g = net(space, resolution).points
        keep = space.dist(x[None, :], g) > DEDUP_EPS
        return CompactSample(np.concatenate([x[None, :], g[keep]]), resolution)
    return ball(space, x, r * space.diameter, resolution)


# --------------------------------------------------------------------------
# fields of compact sets


class Regularity(enum.Enum):
    SEMICONTINUOUS = "semicontinuous"
    CONTINUOUS = "continuous"
    UNKNOWN = "unknown"


def _key(x) -> tuple:
    return tuple(np.round(np.asarray(x, dtype=float), 12).tolist())


@dataclass(eq=False)
class FieldOfCompactSets:
    """Lazy map point -> :class:`CompactSample` with memoized evaluation."""

    space: MetricSpace
    func: Callable[[np.ndarray], CompactSample]
    base_point_included: bool = True
    regularity: Regularity = Regularity.UNKNOWN
    name: str = ""
    violations: list = field(default_factory=list)
    _cache: dict = field(default_factory=dict, repr=False)

    def __call__(self, x) -> CompactSample:
        x = self.space.canonical(self.space.check_point(x))
        k = _key(x)
        if k not in self._cache:
            self._cache[k] = self.func(x)
        return self._cache[k]

    evaluate = __call__


def ball_field(space: MetricSpace, r: float, resolution: float) -> FieldOfCompactSets:
    return FieldOfCompactSets(space, lambda x: ball(space, x, r, resolution),
                              True, Regularity.SEMICONTINUOUS, f"ball({r})")


def null_field(space: MetricSpace, resolution: float = 1e-3) -> FieldOfCompactSets:
    return FieldOfCompactSets(space, lambda x: CompactSample(x[None, :], resolution),
                              True, Regularity.CONTINUOUS, "null")


def total_field(space: MetricSpace, resolution: float) -> FieldOfCompactSets:
    g = net(space, resolution).points

    def f(x):
        keep = space.dist(x[None, :], g) > DEDUP_EPS
        return CompactSample(np.concatenate([x[None, :], g[keep]]), resolution)

    return FieldOfCompactSets(space, f, True, Regularity.CONTINUOUS, "total")


def _match(space, A, B, tol):
    """Points of ``A`` within ``tol`` of some point of ``B``."""
    if len(A) == 0 or len(B) == 0:
        return A[:0]
    return A[point_to_set(space, A, B) <= tol]


def field_intersect(h1: FieldOfCompactSets, h2: FieldOfCompactSets,
                    tolerance: float | None = None) -> FieldOfCompactSets:
    """Pointwise intersection at a matching tolerance.

    A point of either sample is kept when the other sample has a point within
    the tolerance.  When the result would lose the base point although both
    operands include it, a violation record is appended to ``violations``.
    """
    if not h1.space.same_as(h2.space):
        raise DomainError("fields live on different spaces")
    space = h1.space
    out = FieldOfCompactSets(space, lambda x: None, h1.base_point_included and h2.base_point_included,
                             Regularity.SEMICONTINUOUS
                             if Regularity.UNKNOWN not in (h1.regularity, h2.regularity)
                             else Regularity.UNKNOWN,
                             f"({h1.name} & {h2.name})")

    def f(x):
        K, L = h1(x), h2(x)
        tol = tolerance if tolerance is not None else max(K.resolution, L.resolution)
        pts = np.concatenate([_match(space, K.points, L.points, tol),
                              _match(space, L.points, K.points, tol)])
        if out.base_point_included:
            if len(pts) == 0 or point_to_set(space, x[None, :], pts)[0] > tol:
                out.violations.append({"x": x.tolist(), "reason": "base point lost"})
            pts = np.concatenate([x[None, :], pts]) if len(pts) else x[None, :]
        elif len(pts) == 0:
            out.violations.append({"x": x.tolist(), "reason": "empty intersection"})
            pts = x[None, :]
        return make_sample(space, pts, max(K.resolution, L.resolution))

    out.func = f
    return out


def transpose_field(h: FieldOfCompactSets, domain, tolerance: float) -> FieldOfCompactSets:
    """Sampled transpose: ``h^T(x) = {y in domain : dist(x, h(y)) <= tolerance}``."""
    space = h.space
    D = _as_points(domain)
    images = [h(y).points for y in D]

    def f(x):
        hit = [i for i, K in enumerate(images)
               if point_to_set(space, x[None, :], K)[0] <= tolerance]
        pts = D[hit]
        if h.base_point_included:
            pts = np.concatenate([x[None, :], pts]) if len(pts) else x[None, :]
        elif len(pts) == 0:
            pts = x[None, :]
        return make_sample(space, pts, tolerance)

    return FieldOfCompactSets(space, f, h.base_point_included, h.regularity, f"{h.name}^T")


@dataclass
class SemicontinuityReport:
    max_excess: float
    worst_pair: tuple | None
    n_pairs: int


def check_semicontinuity(h: FieldOfCompactSets, domain, probe_radius: float) -> SemicontinuityReport:
    """Largest one-sided excess ``sup_{z in h(y)} d(z, h(x))`` over close pairs."""
    space = h.space
    D = _as_points(domain)
    if len(D) == 0:
        raise DomainError("domain must be non-empty")
    worst, pair, n = 0.0, None, 0
    for i, x in enumerate(D):
        near = np.nonzero(space.dist(x[None, :], D) < probe_radius)[0]
        Hx = h(x).points
        for j in near:
            if j == i:
                continue
            n += 1
            e = float(point_to_set(space, h(D[j]).points, Hx).max())
            if e > worst:
                worst, pair = e, (x.copy(), D[j].copy())
    return SemicontinuityReport(worst, pair, n)


def adjacency_components(space: MetricSpace, pts, radius: float) -> np.ndarray:
    """Connected-component labels of the graph joining points closer than ``radius``."""
    P = _as_points(pts)
    n = len(P)
    rows, cols = [], []
    for s in range(0, n, 256):
        d = space.dist(P[s:s + 256, None, :], P[None, :, :])
        r, c = np.nonzero(d <= radius)
        rows.append(r + s)
        cols.append(c)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    mat = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    _, labels = connected_components(mat, directed=False)
    return labels


def diameter_of(space: MetricSpace, pts) -> float:
    P = _as_points(pts)
    best = 0.0
    for s in range(0, len(P), 256):
        best = max(best, float(space.dist(P[s:s + 256, None, :], P[None, :, :]).max()))
    return best


def thin(space: MetricSpace, pts, radius: float) -> np.ndarray:
    """Greedy thinning: keep a point unless it is within ``radius`` of a kept one.

    Order is preserved, so the first point always survives.
    """
    P = _as_points(pts)
    if len(P) <= 1:
        return P
    _, first = np.unique(np.round(P, 10), axis=0, return_index=True)
    P = P[np.sort(first)]
    radius = max(radius, DEDUP_EPS)
    keep = [0]
    for i in range(1, len(P)):
        if space.dist(P[i][None, :], P[keep]).min() >= radius:
            keep.append(i)
    return P[keep]
