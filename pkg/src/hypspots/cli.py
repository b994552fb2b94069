"""Command-line front end.

Every command validates its configuration before doing any work.  Results go
to ``<out>/<command>.json`` (deterministic, sorted keys) with run metadata in
a separate ``<command>.meta.json``; human-readable tables go to stdout.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import platform
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .eigen import EigenSolverError, solve_mesh
from .hotspots import (
    analyze_hotspots,
    boundary_length,
    ideal_polygon_sweep,
    mixed_arc_experiment,
    verify_domain,
    write_svg,
)
from .mesh import DomainSpec, MeshError, SpecError, mesh_area, triangulate, write_vtk
from .special import RootNotFoundError, SpecialFunctionError, disk_mu2, threshold_area, threshold_radius

log = logging.getLogger("hypspots")


class ConfigError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    # one-line errors instead of the usage dump
    def error(self, message):
        raise ConfigError(message)


@dataclass
class RunConfig:
    command: str
    domain: str | None = None
    h: float = 0.1
    k: int = 4
    tol: float = 1e-8
    tau: float = 0.05
    collar: float | None = None
    out: str = "hypspots-out"
    exports: dict = field(default_factory=lambda: {"json": True, "vtk": False, "svg": False})

    def validate(self):
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ConfigError(f"h must be positive, got {self.h}")
        if self.command in ("solve", "verify", "mixed-sweep", "ideal-sweep") and self.k < 2:
            raise ConfigError(f"k must be >= 2, got {self.k}")
        if not 0 < self.tol <= 1e-2:
            raise ConfigError(f"tol must lie in (0, 1e-2], got {self.tol}")
        if not 0 < self.tau < 0.5:
            raise ConfigError(f"tau must lie in (0, 0.5), got {self.tau}")
        if self.collar is not None and not self.collar > 0:
            raise ConfigError(f"collar must be positive, got {self.collar}")
        if self.command in ("solve", "verify", "mixed-sweep") and not self.domain:
            raise ConfigError("--domain is required")
        return self


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def _emit(cfg: RunConfig, name: str, payload: dict, started: float) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    body = {"command": cfg.command, "config": _jsonable(asdict(cfg)), "result": _jsonable(payload)}
    path = out / f"{name}.json"
    path.write_text(json.dumps(body, sort_keys=True, indent=2) + "\n")
    meta = {
        "version": __version__,
        "python": platform.python_version(),
        "created": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "elapsed_s": round(time.perf_counter() - started, 3),
    }
    (out / f"{name}.meta.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    return path


def _load_spec(path: str) -> DomainSpec:
    try:
        return DomainSpec.from_json(path)
    except FileNotFoundError:
        raise ConfigError(f"domain file not found: {path}") from None


def _parse_list(text: str, cast=float) -> list:
    try:
        vals = [cast(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse list {text!r}") from None
    if not vals:
        raise ConfigError(f"empty list {text!r}")
    return vals


def _parse_range(text: str) -> list[float]:
    try:
        a, b, step = (float(v) for v in text.split(":"))
    except ValueError:
        raise ConfigError(f"sweep must look like a:b:step, got {text!r}") from None
    if not (a > 0 and b >= a and step > 0):
        raise ConfigError("sweep needs 0 < a <= b and step > 0")
    n = int(math.floor((b - a) / step + 1e-9))
    return [round(a + i * step, 12) for i in range(n + 1)]


# --------------------------------------------------------------------------
# commands


def cmd_threshold(cfg: RunConfig, args) -> int:
    t0 = time.perf_counter()
    tol = args.tol if args.tol is not None else 1e-10
    r0 = threshold_radius(tol)
    area = threshold_area(tol)
    print(f"r0={r0:.10f} A={area:.8f}")
    _emit(cfg, "threshold", {"r0": r0, "A": area, "tol": tol}, t0)
    return 0


def cmd_disk(cfg: RunConfig, args) -> int:
    t0 = time.perf_counter()
    if args.radius is not None:
        if not args.radius > 0:
            raise ConfigError(f"radius must be positive, got {args.radius}")
        radii = [args.radius]
    elif args.radius_sweep is not None:
        radii = _parse_range(args.radius_sweep)
    else:
        raise ConfigError("give --radius or --radius-sweep")
    rows = []
    print(f"{'R':>10} {'mu2':>22}")
    for R in radii:
        mu = disk_mu2(R)
        rows.append({"radius": R, "mu2": mu})
        print(f"{R:10.5f} {mu:22.15g}")
    decreasing = all(b["mu2"] < a["mu2"] for a, b in zip(rows, rows[1:]))
    _emit(cfg, "disk", {"rows": rows, "strictly_decreasing": decreasing}, t0)
    return 0


def _exports(cfg, m, u, name, fields):
    out = Path(cfg.out)
    if cfg.exports.get("vtk"):
        write_vtk(m, out / f"{name}.vtk", point_data=fields)
    if cfg.exports.get("svg"):
        write_svg(m, u, out / f"{name}.svg", levels=4)


def cmd_solve(cfg: RunConfig, args) -> int:
    t0 = time.perf_counter()
    spec = _load_spec(cfg.domain)
    m = triangulate(spec, cfg.h)
    pairs = solve_mesh(m, k=cfg.k, tol=cfg.tol)
    mixed = spec.dirichlet is not None
    payload = {
        "domain": spec.to_dict(),
        "problem": "mixed" if mixed else "neumann",
        "eigenvalues": pairs.eigenvalues,
        "residuals": pairs.residuals,
        "method": pairs.method,
        "vertices": m.n_vertices,
        "triangles": len(m.triangles),
        "dofs": len(pairs.dofs.free),
        "mesh_area": mesh_area(m),
    }
    label = "lambda" if mixed else "mu"
    for i, (v, r) in enumerate(zip(pairs.eigenvalues, pairs.residuals), 1):
        print(f"{label}{i}={v:.12g} residual={r:.2e}")
    Path(cfg.out).mkdir(parents=True, exist_ok=True)
    vecs = pairs.full_vectors()
    _exports(cfg, m, vecs[:, 1 if not mixed else 0], "solve",
             {f"u{i + 1}": vecs[:, i] for i in range(vecs.shape[1])})
    _emit(cfg, "solve", payload, t0)
    return 0


def cmd_verify(cfg: RunConfig, args) -> int:
    t0 = time.perf_counter()
    spec = _load_spec(cfg.domain)
    report, m, pairs = verify_domain(spec, cfg.h, cfg.k, cfg.tol, cfg.tau, collar=cfg.collar)
    print(f"verdict={report.verdict} eigenvalue={report.mu2_or_lambda1:.10g} "
          f"grad_rel={report.interior_grad_min_rel:.4g} nodal_domains={report.nodal_domain_count}")
    Path(cfg.out).mkdir(parents=True, exist_ok=True)
    u = pairs.full_vectors()[:, report.which - 1]
    _exports(cfg, m, u, "verify", {"u": u})
    _emit(cfg, "verify", report.to_dict(), t0)
    return 0


def cmd_mixed_sweep(cfg: RunConfig, args) -> int:
    t0 = time.perf_counter()
    spec = _load_spec(cfg.domain)
    if args.arcs:
        arcs = _parse_list(args.arcs)
    else:
        start = args.start if args.start is not None else boundary_length(spec) / 2
        arcs = [start / 2**i for i in range(args.halvings + 1)]
    if any(a <= 0 for a in arcs):
        raise ConfigError("arc lengths must be positive")
    rows = mixed_arc_experiment(spec, arcs, h=cfg.h, k=cfg.k, tol=cfg.tol, tau=cfg.tau)
    print(f"{'arc':>10} {'lambda1':>16} verdict")
    for r in rows:
        print(f"{r['arc_length']:10.5f} {r['lambda1']:16.10f} {r['report']['verdict']}")
    lam = [r["lambda1"] for r in rows]
    _emit(cfg, "mixed-sweep", {"rows": rows,
                               "strictly_decreasing": all(b < a for a, b in zip(lam, lam[1:]))}, t0)
    return 0


def cmd_ideal_sweep(cfg: RunConfig, args) -> int:
    t0 = time.perf_counter()
    ns = _parse_list(args.n, int)
    depths = _parse_list(args.depth)
    if any(n < 3 for n in ns) or any(d <= 0 for d in depths):
        raise ConfigError("need n >= 3 and positive depths")
    rows = ideal_polygon_sweep(ns, depths, h=cfg.h, k=cfg.k, tol=cfg.tol)
    print(f"{'n':>4} {'depth':>6} {'mu2':>14} {'trend':>12}")
    for r in rows:
        trend = "" if r["trend"] is None else f"{r['trend']:12.3e}"
        print(f"{r['n']:4d} {r['depth']:6.2f} {r['mu2']:14.10f} {trend}")
    _emit(cfg, "ideal-sweep", {"rows": rows}, t0)
    return 0


COMMANDS = {
    "threshold": cmd_threshold,
    "disk": cmd_disk,
    "solve": cmd_solve,
    "verify": cmd_verify,
    "mixed-sweep": cmd_mixed_sweep,
    "ideal-sweep": cmd_ideal_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--out", default="hypspots-out", help="output directory")
    common.add_argument("--h", type=float, default=0.1, help="hyperbolic mesh size")
    common.add_argument("--k", type=int, default=4, help="number of eigenpairs")
    common.add_argument("--tol", type=float, default=None, help="solver / root-finder tolerance")
    common.add_argument("--tau", type=float, default=0.05, help="relative interior gradient threshold")
    common.add_argument("--collar", type=float, default=None,
                        help="hyperbolic width excluded from the interior (default 2h)")
    common.add_argument("--vtk", action="store_true", help="also write VTK output")
    common.add_argument("--svg", action="store_true", help="also write SVG contour plots")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="hypspots", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("threshold", parents=[common], help="radius r0 and area A where the disk mu2 is 1/4")

    d = sub.add_parser("disk", parents=[common], help="mu2 of hyperbolic disks")
    g = d.add_mutually_exclusive_group()
    g.add_argument("--radius", type=float)
    g.add_argument("--radius-sweep", metavar="A:B:STEP")

    for name, text in (("solve", "eigenpairs on a domain"), ("verify", "hot-spots report for a domain")):
        s = sub.add_parser(name, parents=[common], help=text)
        s.add_argument("--domain", required=True, help="domain spec JSON file")

    ms = sub.add_parser("mixed-sweep", parents=[common], help="first mixed eigenvalue vs Dirichlet arc length")
    ms.add_argument("--domain", required=True)
    ms.add_argument("--arcs", help="comma-separated arc lengths")
    ms.add_argument("--start", type=float, help="first arc length (default half the boundary)")
    ms.add_argument("--halvings", type=int, default=5)

    isw = sub.add_parser("ideal-sweep", parents=[common], help="mu2 of truncated ideal polygons")
    isw.add_argument("--n", default="3,6,12,18,24")
    isw.add_argument("--depth", default="3,4,5")
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = RunConfig(
            command=args.command,
            domain=getattr(args, "domain", None),
            h=args.h,
            k=args.k,
            tol=args.tol if args.tol is not None else 1e-8,
            tau=args.tau,
            collar=args.collar,
            out=args.out,
            exports={"json": True, "vtk": args.vtk, "svg": args.svg},
        ).validate()
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, SpecError) as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    except (MeshError, EigenSolverError, SpecialFunctionError, RootNotFoundError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
