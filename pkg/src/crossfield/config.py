"""Scenario files: ``section.key = value`` lines, ``#`` comments.

Values are parsed as booleans (``true``/``false``), numbers, comma separated
lists, or plain strings; values under ``scenario.`` are kept verbatim.  Keys
under ``expect.`` declare the verdicts a regression scenario must reproduce.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

SECTIONS = ("scenario", "space", "flow", "pipeline", "dynamics", "diagnostics", "expect", "run")

DIAGNOSTICS = ("validators", "stable_sets", "decay", "expansivity", "positive", "stable_points",
               "continuum", "wandering", "demo")


def _scalar(text: str):
    low = text.lower()
    if low in ("true", "yes"):
        return True
    if low in ("false", "no"):
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def parse_value(text: str):
    text = text.strip()
    if "," in text:
        items = [_scalar(t.strip()) for t in text.split(",") if t.strip()]
        return items
    return _scalar(text)


def parse_text(text: str, source: str = "<string>") -> dict:
    """Nested dict ``{section: {key: value}}`` from scenario text."""
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'section.key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if "." not in key:
            raise ConfigError(f"{source}:{lineno}: key {key!r} has no section")
        sec, name = key.split(".", 1)
        if sec not in SECTIONS:
            raise ConfigError(f"{source}:{lineno}: unknown section {sec!r}")
        if not name or not value:
            raise ConfigError(f"{source}:{lineno}: empty key or value")
        if name in out.get(sec, {}):
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out.setdefault(sec, {})[name] = value if sec == "scenario" else parse_value(value)
    return out


def _as_list(v, name) -> list[float]:
    vals = v if isinstance(v, list) else [v]
    try:
        vals = [float(x) for x in vals]
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be numbers") from None
    if not vals or not all(math.isfinite(x) and x > 0 for x in vals):
        raise ConfigError(f"{name} must be a non-empty list of positive numbers")
    return vals


def _positive(v, name) -> float:
    try:
        x = float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a number") from None
    if not (math.isfinite(x) and x > 0):
        raise ConfigError(f"{name} must be positive")
    return x


@dataclass
class ScenarioConfig:
    name: str
    description: str
    space: dict
    flow: dict
    resolution: float
    t_grid: list
    rho_grid: list | None
    sections: str                    # "leaf" or "pipeline" for the dynamics diagnostics
    leaf_rho: float
    dyn_resolution: float
    eps: float
    delta_grid: list
    horizon: float
    decay_times: list
    wandering_radius: float
    wandering_horizon: float
    domain_points: int
    diagnostics: list
    seed: int = 0
    expect: dict = field(default_factory=dict)
    source: str = ""

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if k != "source"}


def _vector(v):
    return [float(x) for x in v] if isinstance(v, list) else v


def build_config(raw: dict, source: str = "") -> ScenarioConfig:
    sc, sp, fl = raw.get("scenario", {}), raw.get("space", {}), raw.get("flow", {})
    pl, dy, dg = raw.get("pipeline", {}), raw.get("dynamics", {}), raw.get("diagnostics", {})
    if "kind" not in sp or "kind" not in fl:
        raise ConfigError("space.kind and flow.kind are required")
    space = {k: _vector(v) for k, v in sp.items()}
    flow = {k: _vector(v) for k, v in fl.items()}
    if "periods" in space and isinstance(space["periods"], list):
        space["periods"] = tuple(space["periods"])
    if "matrix" in space:
        m = space["matrix"]
        if not isinstance(m, list) or len(m) != 4:
            raise ConfigError("space.matrix must list four integers row by row")
        space["matrix"] = ((int(m[0]), int(m[1])), (int(m[2]), int(m[3])))
    diags = dg.get("run", [])
    diags = [diags] if isinstance(diags, str) else list(diags)
    unknown = [d for d in diags if d not in DIAGNOSTICS]
    if unknown:
        raise ConfigError(f"unknown diagnostics {unknown}; choose from {', '.join(DIAGNOSTICS)}")
    sections = str(dy.get("sections", "leaf"))
    if sections not in ("leaf", "pipeline"):
        raise ConfigError("dynamics.sections must be 'leaf' or 'pipeline'")
    seed = raw.get("run", {}).get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("run.seed must be a non-negative integer")
    npts = dg.get("domain_points", 3)
    if not isinstance(npts, int) or npts < 1:
        raise ConfigError("diagnostics.domain_points must be a positive integer")
    decay = dy.get("decay_times", [0, 1, 2, 3, 4, 5, 6])
    decay = [float(x) for x in (decay if isinstance(decay, list) else [decay])]
    if not decay or any(t < 0 for t in decay):
        raise ConfigError("dynamics.decay_times must be non-negative")
    return ScenarioConfig(
        name=str(sc.get("name", Path(source).stem or "scenario")),
        description=str(sc.get("description", "")),
        space=space, flow=flow,
        resolution=_positive(pl.get("resolution", 0.05), "pipeline.resolution"),
        t_grid=_as_list(pl.get("t_grid", [0.1, 0.2, 0.4]), "pipeline.t_grid"),
        rho_grid=_as_list(pl["rho_grid"], "pipeline.rho_grid") if "rho_grid" in pl else None,
        sections=sections,
        leaf_rho=_positive(dy.get("leaf_rho", 0.25), "dynamics.leaf_rho"),
        dyn_resolution=_positive(dy.get("resolution", 0.02), "dynamics.resolution"),
        eps=_positive(dy.get("eps", 0.2), "dynamics.eps"),
        delta_grid=_as_list(dy.get("delta_grid", [0.05, 0.1]), "dynamics.delta_grid"),
        horizon=_positive(dy.get("horizon", 8.0), "dynamics.horizon"),
        decay_times=decay,
        wandering_radius=_positive(dy.get("wandering_radius", 0.1), "dynamics.wandering_radius"),
        wandering_horizon=_positive(dy.get("wandering_horizon", 50.0), "dynamics.wandering_horizon"),
        domain_points=npts, diagnostics=diags, seed=seed,
        expect=dict(raw.get("expect", {})), source=source)


def load_config(path) -> ScenarioConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc.strerror}") from None
    return build_config(parse_text(text, str(p)), str(p))
