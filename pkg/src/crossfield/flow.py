"""Flows on the built-in spaces, regularity certificates and trajectory sampling."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, RegularityError
from .space import CatSuspension, Circle, FlatTorus2, MetricSpace, net


def _check_time(t):
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)):
        raise DomainError("flow time must be finite")
    return t


class Flow:
    """A continuous flow on ``space``.

    ``evolve(x, t)`` accepts points of shape ``(..., dim)`` and times that
    broadcast against the leading axes.
    """

    kind = "abstract"
    space: MetricSpace
    #: metric speed of orbits when it is constant, else None
    speed: float | None = None
    #: smallest period of a closed orbit if known (inf if none is short)
    min_period: float = math.inf

    def _evolve(self, x, t):
        raise NotImplementedError

    def evolve(self, x, t):
        x = self.space.check_point(x)
        t = _check_time(t)
        return self.space.canonical(self._evolve(np.asarray(x, dtype=float), t))

    __call__ = evolve

    def inverse(self) -> "Flow":
        return InverseFlow(self)

    def to_config(self) -> dict:
        raise NotImplementedError

    def __repr__(self):
        params = ", ".join(f"{k}={v}" for k, v in self.to_config().items() if k != "kind")
        return f"{type(self).__name__}({params})"


class CircleRotation(Flow):
    kind = "circle_rotation"

    def __init__(self, speed: float = 1.0, space: Circle | None = None):
        self.space = space or Circle(1.0)
        self.rate = float(speed)
        self.speed = abs(self.rate)
        self.min_period = self.space.circumference / self.speed if self.speed else math.inf

    def _evolve(self, x, t):
        return x + (self.rate * t)[..., None]

    def to_config(self):
        return {"kind": self.kind, "speed": self.rate}


class TorusLinear(Flow):
    """Straight-line flow with a unit direction vector (the input is normalized)."""

    kind = "torus_linear"

    def __init__(self, direction: Sequence[float] = (1.0, 0.0), space: FlatTorus2 | None = None):
        d = np.asarray(direction, dtype=float)
        n = float(np.hypot(*d))
        if d.shape != (2,) or n == 0:
            raise DomainError("direction must be a non-zero 2-vector")
        self.space = space or FlatTorus2()
        self.direction = d / n
        self.speed = 1.0
        self.min_period = _torus_period(self.direction, self.space.periods)

    def _evolve(self, x, t):
        return x + t[..., None] * self.direction

    def to_config(self):
        return {"kind": self.kind, "direction": self.direction.tolist()}


def _torus_period(direction, periods, max_den=64):
    """Closing time of a linear torus orbit, ``inf`` unless the slope is a small rational."""
    w = np.abs(np.asarray(direction, dtype=float) / np.asarray(periods, dtype=float))
    if w[0] == 0 or w[1] == 0:
        return float(1.0 / w.max())
    ratio = Fraction(float(w[0] / w[1])).limit_denominator(max_den)
    if abs(ratio.numerator / ratio.denominator - w[0] / w[1]) > 1e-9:
        return math.inf
    # winds ratio.numerator times in x1 while winding ratio.denominator times in x2
    return float(ratio.numerator / w[0])


class CatSuspensionFlow(Flow):
    """Unit vertical flow on the suspension; gluings happen in ``canonical``."""

    kind = "cat_suspension"

    def __init__(self, space: CatSuspension | None = None):
        self.space = space or CatSuspension()
        self.speed = self.space.vertical_scale
        self.min_period = 1.0

    def _evolve(self, x, t):
        out = np.array(np.broadcast_to(x, np.broadcast_shapes(x.shape, t.shape + (3,))), copy=True)
        out[..., 2] = out[..., 2] + t
        return out

    def to_config(self):
        return {"kind": self.kind}


VECTOR_FIELDS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    # circle of circumference 1 with variable but non-vanishing speed
    "circle_variable": lambda x: 1.0 + 0.5 * np.sin(2 * np.pi * x),
    # torus shear: horizontal drift with a height-dependent vertical speed
    "torus_shear": lambda x: np.stack(
        [np.ones(x.shape[:-1]), 0.5 + 0.25 * np.sin(2 * np.pi * x[..., 0])], axis=-1),
}


class OdeFlow(Flow):
    """Flow of a vector field by fixed-step classical RK4 with a final partial step."""

    kind = "ode"

    def __init__(self, space: MetricSpace, field: Callable | str, step: float = 1e-2):
        if not step > 0:
            raise DomainError("integrator step must be positive")
        self.space = space
        self.field_name = field if isinstance(field, str) else getattr(field, "__name__", "custom")
        if isinstance(field, str):
            if field not in VECTOR_FIELDS:
                raise DomainError(f"unknown vector field {field!r}")
            field = VECTOR_FIELDS[field]
        self.field = field
        self.step = float(step)

    def _f(self, x):
        return np.asarray(self.field(x), dtype=float).reshape(x.shape)

    def _evolve(self, x, t):
        shape = np.broadcast_shapes(x.shape[:-1], t.shape)
        y = np.array(np.broadcast_to(x, shape + x.shape[-1:]), dtype=float, copy=True)
        t = np.broadcast_to(t, shape)
        sgn = np.sign(t)
        remaining = np.abs(t).astype(float)
        h = self.step
        while True:
            active = remaining > 0
            if not active.any():
                break
            dt = np.where(active, np.minimum(remaining, h), 0.0) * sgn
            k = dt[..., None]
            ya = y
            k1 = self._f(ya)
            k2 = self._f(ya + 0.5 * k * k1)
            k3 = self._f(ya + 0.5 * k * k2)
            k4 = self._f(ya + k * k3)
            y = ya + k / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            remaining = np.where(active, remaining - np.abs(dt), 0.0)
            remaining = np.where(remaining < 1e-15, 0.0, remaining)
        return y

    def to_config(self):
        return {"kind": self.kind, "field": self.field_name, "step": self.step}


class InverseFlow(Flow):
    """``evolve(x, t)`` of the original flow at ``-t``."""

    def __init__(self, base: Flow):
        self.base = base
        self.space = base.space
        self.speed = base.speed
        self.min_period = base.min_period
        self.kind = f"inverse({base.kind})"
        if isinstance(base, TorusLinear):
            self.direction = -base.direction

    def _evolve(self, x, t):
        return self.base._evolve(x, -t)

    def inverse(self):
        return self.base

    def to_config(self):
        return {"kind": "inverse", "base": self.base.to_config()}


def evolve(flow: Flow, x, t):
    return flow.evolve(x, t)


def inverse_flow(flow: Flow) -> Flow:
    return flow.inverse()


@dataclass(frozen=True)
class RegularityCertificate:
    t_hat: float
    separation: float
    resolution: float


def certify_regularity(flow: Flow, net_resolution: float, t_grid: Sequence[float]) -> RegularityCertificate:
    """Pick the grid time that moves every net point farthest, and certify it."""
    t_grid = [float(t) for t in t_grid]
    if not t_grid:
        raise DomainError("t_grid must be non-empty")
    if any(t <= 0 or not math.isfinite(t) for t in t_grid):
        raise DomainError("t_grid entries must be positive and finite")
    pts = net(flow.space, net_resolution).points
    best_t, best_a = None, -1.0
    for t in t_grid:
        a = float(flow.space.dist(flow.evolve(pts, t), pts).min())
        if a > best_a:
            best_t, best_a = t, a
    if best_a <= 2 * net_resolution:
        raise RegularityError(
            f"regularity not certified: best separation {best_a:.3g} at t={best_t} "
            f"does not exceed twice the net resolution {net_resolution}")
    return RegularityCertificate(best_t, best_a, net_resolution)


def trajectory_segment(flow: Flow, x, t0: float, t1: float, steps: int):
    """``steps + 1`` evenly spaced samples ``(t, point)`` including both endpoints."""
    if steps < 1:
        raise DomainError("steps must be at least 1")
    ts = np.linspace(t0, t1, steps + 1)
    x = np.asarray(x, dtype=float)
    pts = flow.evolve(np.broadcast_to(x, (len(ts),) + x.shape), ts)
    return [(float(t), p) for t, p in zip(ts, pts)]


def flow_from_config(cfg: dict, space: MetricSpace) -> Flow:
    kind = cfg.get("kind")
    if kind == "circle_rotation":
        if not isinstance(space, Circle):
            raise DomainError("circle_rotation needs a circle")
        return CircleRotation(float(cfg.get("speed", 1.0)), space)
    if kind == "torus_linear":
        if not isinstance(space, FlatTorus2):
            raise DomainError("torus_linear needs a flat torus")
        return TorusLinear(tuple(cfg.get("direction", (1.0, 0.0))), space)
    if kind == "cat_suspension":
        if not isinstance(space, CatSuspension):
            raise DomainError("cat_suspension flow needs a cat suspension space")
        return CatSuspensionFlow(space)
    if kind == "ode":
        return OdeFlow(space, str(cfg["field"]), float(cfg.get("step", 1e-2)))
    if kind == "inverse":
        return flow_from_config(cfg["base"], space).inverse()
    raise DomainError(f"unknown flow kind {kind!r}")
