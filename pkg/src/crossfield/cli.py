"""Command line scenario runner.

    crossfield list [--dir DIR]
    crossfield run <name-or-path> [--out DIR] [--seed N] [--threads N] [--resolution R]

Exit status: 0 success, 1 a declared expectation failed, 2 configuration
error, 3 a pipeline stage precondition failed (the stage is printed).
"""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ScenarioConfig, load_config
from .errors import ConfigError, CrossfieldError, DomainError, PreconditionError, RegularityError
from .io import write_csv, write_jsonl, write_manifest

SCENARIO_DIR = Path(__file__).parent / "scenarios"
DEFAULT_OUT = "crossfield_out"

ABOUT = {
    "regularity": "regularity certificate: a grid time moving every net point at least the separation",
    "sections": "cross-section, monotonicity and symmetry checks of the constructed section field",
    "stable_sets": "stable sets at a finite horizon through sampled points",
    "decay": "diameter of the tracked stable set against time; its log-slope is the contraction rate",
    "expansivity": "expansivity through trivial intersections of stable and unstable sets",
    "positive": "positive expansivity: singleton stable sets, expected only on circles",
    "stable_points": "stable points: whole section neighbourhoods tracked up to the horizon",
    "continuum": "diameter of the connected stable component through each sampled point",
    "wandering": "returns of a section neighbourhood into itself",
    "demo": "surfaces cannot carry expansive flows with stable points; circles are exempt",
    "expectations": "declared expectations of the scenario and whether they hold",
}


def bundled_scenarios(extra_dir=None) -> dict[str, Path]:
    found = {p.stem: p for p in sorted(SCENARIO_DIR.glob("*.cfg"))}
    if extra_dir is not None:
        for p in sorted(Path(extra_dir).glob("*.cfg")):
            found.setdefault(p.stem, p)
    return found


def list_scenarios(extra_dir=None) -> str:
    lines = []
    for name, path in bundled_scenarios(extra_dir).items():
        try:
            desc = load_config(path).description
        except ConfigError as exc:
            desc = f"(invalid: {exc})"
        lines.append(f"{name:<16} {desc}")
    return "\n".join(lines)


def resolve_scenario(name_or_path: str, extra_dir=None) -> Path:
    p = Path(name_or_path)
    if p.suffix == ".cfg" and p.exists():
        return p
    known = bundled_scenarios(extra_dir)
    if name_or_path in known:
        return known[name_or_path]
    raise ConfigError(f"unknown scenario {name_or_path!r}; known: {', '.join(known)}")


class ScenarioFailure(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status


def _objects(cfg: ScenarioConfig):
    from .flow import flow_from_config
    from .space import space_from_config
    try:
        space = space_from_config(cfg.space)
        flow = flow_from_config(cfg.flow, space)
    except (DomainError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad space or flow: {exc}") from None
    return space, flow


def _check_expectations(cfg: ScenarioConfig, results: dict) -> list[tuple[str, str, str, bool]]:
    rows = []
    for key, want in sorted(cfg.expect.items()):
        if key == "decay_rtol":
            continue
        got = results.get(key)
        if key == "decay_slope":
            rtol = float(cfg.expect.get("decay_rtol", 0.05))
            ok = got is not None and abs(got - float(want)) <= rtol * abs(float(want))
        elif got is None:
            ok = False
        else:
            ok = str(got).lower() == str(want).lower()
        rows.append((key, str(want), str(got), ok))
    return rows


def run_scenario(cfg: ScenarioConfig, out_root) -> tuple[int, Path, list[str]]:
    """Run one scenario and write its outputs under ``out_root/<name>``."""
    from .dynamics import diam_decay, nontrivial_stable_continuum, stable_point_check, stable_set, wandering_check
    from .expansivity import expansive_scan, planar_obstruction_demo, positive_expansive_check
    from .flow import certify_regularity
    from .sections import (build_monotone_symmetric_sections, check_cross_section, check_monotone,
                           check_symmetric, leaf_sections)
    from .space import diameter_of, net

    space, flow = _objects(cfg)
    out = Path(out_root) / cfg.name
    out.mkdir(parents=True, exist_ok=True)
    files: list[tuple[Path, str]] = []
    results: dict = {}
    res = cfg.resolution

    def emit(kind, path):
        files.append((path, ABOUT[kind]))

    try:
        cert = certify_regularity(flow, res, cfg.t_grid)
    except RegularityError as exc:
        raise PreconditionError(str(exc), stage="regularity") from None
    emit("regularity", write_csv(out / "regularity.csv", ABOUT["regularity"],
                                 ["t_hat", "separation", "resolution"],
                                 [(cert.t_hat, cert.separation, cert.resolution)]))
    H = build_monotone_symmetric_sections(flow, res, cfg.t_grid, rho_grid=cfg.rho_grid, seed=cfg.seed)

    rng = np.random.default_rng(cfg.seed)
    pool = net(space, res).points
    pick = np.sort(rng.choice(len(pool), size=min(cfg.domain_points, len(pool)), replace=False))
    domain = pool[pick]
    x0 = domain[0]
    sizes = [len(H(x)) for x in domain]
    results["sections_singleton"] = all(n == 1 for n in sizes)
    Hd = H if cfg.sections == "pipeline" else leaf_sections(flow, cfg.leaf_rho, cfg.dyn_resolution)
    dres = res if cfg.sections == "pipeline" else cfg.dyn_resolution
    diags = cfg.diagnostics

    if "validators" in diags:
        cross = check_cross_section(flow, H, domain, res)
        mono = check_monotone(flow, H, domain, [H.tau / 4, H.tau / 2, H.tau], res)
        sym = check_symmetric(H, domain, H.rho, 2 * res, max_pairs=4)
        rec = {"summary": H.summary(), "section_sizes": sizes, "cross_section_violations": len(cross.violations),
               "gamma": cross.gamma, "eps_mono": mono.eps_mono, "symmetry": sym.status.value,
               "symmetry_defect": sym.defect, "form_defect": sym.form_defect}
        results["certified"] = cross.ok and mono.ok and sym.ok
        emit("sections", write_jsonl(out / "sections.jsonl", ABOUT["sections"], [rec]))

    if "stable_sets" in diags:
        rows = []
        for x in domain:
            ss = stable_set(flow, Hd, x, cfg.eps, cfg.horizon, dres)
            P = ss.members.points
            rows.append((*x.tolist(), len(P), diameter_of(space, P) if len(P) > 1 else 0.0))
        hdr = [f"x{i}" for i in range(space.dim)] + ["members", "diameter"]
        emit("stable_sets", write_csv(out / "stable_sets.csv", ABOUT["stable_sets"], hdr, rows))

    if "decay" in diags:
        rep = diam_decay(flow, Hd, x0, cfg.eps, cfg.decay_times, dres)
        results["decay_slope"] = rep.slope
        rows = list(rep.rows) + [("slope", rep.slope if rep.slope is not None else "")]
        emit("decay", write_csv(out / "decay.csv", ABOUT["decay"], ["t", "diameter"], rows))

    if "expansivity" in diags:
        rep = expansive_scan(flow, Hd, domain, cfg.delta_grid, cfg.horizon, dres)
        results["expansivity"] = rep.verdict
        recs = [{"delta": d, "x": x, "diameter": diam, "size": n} for d, x, diam, n in rep.rows]
        verdict = {"verdict": rep.verdict, "summary": rep.summary(), "delta_star": rep.delta_star,
                   "worst": rep.worst, "horizon": rep.horizon}
        if rep.witness is not None:
            verdict["witness"] = {"x": rep.witness.x, "y": rep.witness.y, "delta": rep.witness.delta,
                                  "replay": list(rep.witness.replay(flow, Hd))}
        emit("expansivity", write_jsonl(out / "expansivity.jsonl", ABOUT["expansivity"], recs + [verdict]))

    if "positive" in diags:
        rep = positive_expansive_check(flow, Hd, domain, max(cfg.delta_grid), cfg.horizon, dres)
        results["positive_expansive"] = rep.positive
        rows = [(*x.tolist(), d, rep.positive, rep.expected) for x, d in zip(domain, rep.diameters)]
        hdr = [f"x{i}" for i in range(space.dim)] + ["stable_diameter", "positive", "expected"]
        emit("positive", write_csv(out / "positive.csv", ABOUT["positive"], hdr, rows))

    if "stable_points" in diags:
        reps = [stable_point_check(flow, Hd, x, cfg.eps, cfg.delta_grid, cfg.horizon) for x in domain]
        n = sum(r.stable for r in reps)
        results["stable_points"] = "all" if n == len(reps) else ("none" if n == 0 else "some")
        rows = [(*r.x, r.delta, r.stable, r.asymptotic) for r in reps]
        hdr = [f"x{i}" for i in range(space.dim)] + ["delta", "stable", "asymptotic"]
        emit("stable_points", write_csv(out / "stable_points.csv", ABOUT["stable_points"], hdr, rows))

    if "continuum" in diags:
        reps = [nontrivial_stable_continuum(flow, Hd, x, cfg.eps, cfg.eps / 2, cfg.horizon, dres)
                for x in domain]
        results["continuum"] = all(r.nontrivial for r in reps)
        rows = [(*r.x, r.diameter, r.size, r.nontrivial) for r in reps]
        hdr = [f"x{i}" for i in range(space.dim)] + ["diameter", "size", "nontrivial"]
        emit("continuum", write_csv(out / "continuum.csv", ABOUT["continuum"], hdr, rows))

    if "wandering" in diags:
        reps = [wandering_check(flow, Hd, x, cfg.wandering_radius, cfg.wandering_horizon) for x in domain]
        results["wandering"] = any(r.wandering for r in reps)
        rows = [(*r.x, r.wandering, "" if r.first_return is None else r.first_return) for r in reps]
        hdr = [f"x{i}" for i in range(space.dim)] + ["wandering", "first_return"]
        emit("wandering", write_csv(out / "wandering.csv", ABOUT["wandering"], hdr, rows))

    if "demo" in diags:
        rep = planar_obstruction_demo(flow, Hd, domain, cfg.eps, cfg.horizon, dres)
        results["demo_consistent"] = rep.consistent
        rec = {"flow": rep.flow, "surface": rep.surface, "circle": rep.circle, "expansive": rep.expansive,
               "stable_points": rep.stable_points, "continua": rep.continua, "interior": rep.interior,
               "consistent": rep.consistent, "narrative": rep.narrative}
        emit("demo", write_jsonl(out / "demo.jsonl", ABOUT["demo"], [rec]))

    checks = _check_expectations(cfg, results)
    emit("expectations", write_csv(out / "expectations.csv", ABOUT["expectations"],
                                   ["key", "expected", "observed", "ok"], checks))
    failed = [f"{k}: expected {w}, observed {g}" for k, w, g, ok in checks if not ok]
    status = 1 if failed else 0
    payload = {"scenario": cfg.name, "description": cfg.description, "version": __version__,
               "seed": cfg.seed, "config": cfg.to_dict(), "status": status,
               "results": {k: results[k] for k in sorted(results)}}
    write_manifest(out, payload, files)
    return status, out, failed


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="crossfield", description="Cross sections and expansivity diagnostics for flows.")
    sub = p.add_subparsers(dest="command", required=True)
    ls = sub.add_parser("list", help="print the bundled scenarios")
    ls.add_argument("--dir", default=None, help="also list scenarios from this directory")
    run = sub.add_parser("run", help="run a scenario by name or path")
    run.add_argument("scenario")
    run.add_argument("--out", default=None, help="output directory (default: $CROSSFIELD_OUT or ./crossfield_out)")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--threads", type=int, default=1,
                     help="accepted for interface stability; stages run single-threaded")
    run.add_argument("--resolution", type=float, default=None, help="override pipeline.resolution")
    run.add_argument("--dir", default=None, help="extra directory searched for scenario names")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list":
        print(list_scenarios(args.dir))
        return 0
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        if args.seed is not None and args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        cfg = load_config(resolve_scenario(args.scenario, args.dir))
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.resolution is not None:
            if not args.resolution > 0:
                raise ConfigError("--resolution must be positive")
            cfg = replace(cfg, resolution=args.resolution)
        out = args.out or os.environ.get("CROSSFIELD_OUT") or DEFAULT_OUT
        status, where, failed = run_scenario(cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except PreconditionError as exc:
        print(f"precondition failed in stage {exc.stage}: {exc}", file=sys.stderr)
        return 3
    except CrossfieldError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    for line in failed:
        print(f"expectation failed: {line}", file=sys.stderr)
    print(f"{cfg.name}: {'ok' if status == 0 else 'expectations failed'} -> {where}")
    return status


if __name__ == "__main__":
    sys.exit(main())
