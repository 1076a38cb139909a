"""Command line: ``gilsim mesh|run|sweep``.

Exit codes: 0 success, 2 config error, 3 mesh failure, 4 solver failure, 5 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

from . import __version__, config as cfgmod, postproc
from .errors import ConfigError, ExportError, GilsimError, InvalidGeometry, MeshFailure, NotFound
from .scenarios import ScenarioKind, build_mesh, run_scenario

EXIT_OK, EXIT_CONFIG, EXIT_MESH, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4, 5
_LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO,
               "debug": logging.DEBUG}

log = logging.getLogger("gilsim")


def _setup_logging():
    name = os.environ.get("GILSIM_LOG", "warn").lower()
    level = _LOG_LEVELS.get(name, logging.WARNING)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, (ConfigError, InvalidGeometry)):
        return EXIT_CONFIG
    if isinstance(exc, (MeshFailure, NotFound)):
        return EXIT_MESH
    if isinstance(exc, (ExportError, OSError)):
        return EXIT_IO
    return EXIT_SOLVER


def _load(path) -> dict:
    return {} if path is None else cfgmod.load_json(path)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def cmd_mesh(config_path=None, out="gilsim-out", refine: int = 0) -> int:
    try:
        cfg = cfgmod.parse_config(_load(config_path))
        cfg = replace(cfg, refine=cfg.refine + refine)
        mesh = build_mesh(cfg)
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        postproc.export_vtk(None, mesh, out / "mesh.vtk", title="gilsim mesh")
    except (GilsimError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)
    s = mesh.stats()
    print(f"nodes {s['nodes']}  elements {s['elements']}  min angle {s['min_angle_deg']:.2f} deg")
    if mesh.triple_point_A is not None:
        a, b = mesh.nodes[mesh.triple_point_A], mesh.nodes[mesh.triple_point_B]
        print(f"triple point A at r={a[0]:.6g} m z={a[1]:.6g} m, B at r={b[0]:.6g} m z={b[1]:.6g} m")
    print(f"wrote {out / 'mesh.vtk'}")
    return EXIT_OK


def _write_manifest(out: Path, manifest: dict):
    try:
        postproc.write_json(manifest, out / "manifest.json")
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return None


def cmd_run(config_path=None, out="gilsim-out", refine: int = 0) -> int:
    started = _now()
    try:
        data = _load(config_path)
        cfg = cfgmod.parse_config(data, output_dir=Path(out))
        cfg = replace(cfg, refine=cfg.refine + refine)
        digest = cfgmod.config_hash(data)
        Path(out).mkdir(parents=True, exist_ok=True)
    except (GilsimError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)

    out = Path(out)
    manifest = {
        "config_path": None if config_path is None else str(config_path),
        "config_hash": digest,
        "refine": cfg.refine,
        "tool_version": __version__,
        "started": started,
    }
    code = EXIT_OK
    try:
        result = run_scenario(cfg)
    except (GilsimError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = _exit_code(exc)
        manifest.update(finished=_now(), artifacts=[], variants={}, exit_code=code, error=str(exc))
        return _write_manifest(out, manifest) or code

    statuses = {}
    for name, vr in result.variants.items():
        statuses[name] = vr.status if vr.error is None else f"{vr.status}: {vr.error}"
        if vr.status != "ok":
            failed_code = vr.summary.get("error_code")
            code = max(code, EXIT_IO if failed_code == ExportError.code else EXIT_SOLVER)
    for line in result.report_lines():
        print(line)
    manifest.update(finished=_now(), artifacts=result.files, variants=statuses, exit_code=code)
    return _write_manifest(out, manifest) or code


def _sweep_point(args):
    index, value, data, param, out, refine = args
    row = {"value": value, "status": "ok", "error": ""}
    try:
        point = cfgmod.set_path(data, param, value)
        cfg = cfgmod.parse_config(point, output_dir=Path(out) / f"point_{index:03d}")
        cfg = replace(cfg, refine=cfg.refine + refine, write_snapshots=False)
        result = run_scenario(cfg)
    except (GilsimError, OSError) as exc:
        row.update(status="failed", error=f"{getattr(exc, 'code', 'IO_ERROR')}: {exc}")
        return row
    for name, vr in result.variants.items():
        s = vr.summary
        if vr.status != "ok":
            row["status"] = "failed"
            row["error"] = (row["error"] + "; " if row["error"] else "") + f"{name}: {vr.error}"
            continue
        row[f"{name}_max_E_V_per_m"] = s["max_E_V_per_m"]
        for probe in ("A", "B"):
            key = f"E_{probe}_final_V_per_m"
            if key in s:
                row[f"{name}_{key}"] = s[key]
    for r in result.reductions:
        row[f"{r['test']}_reduction_percent"] = r["reduction_percent"]
    return row


def cmd_sweep(config_path=None, out="gilsim-out", param=None, values=(), jobs: int = 1,
              refine: int = 0) -> int:
    try:
        if not param:
            raise ConfigError("--param: a dotted config path is required")
        if not values:
            raise ConfigError("--values: at least one value is required")
        data = _load(config_path)
        cfgmod.parse_config(cfgmod.set_path(data, param, values[0]))  # fail early on a bad path
        Path(out).mkdir(parents=True, exist_ok=True)
    except (GilsimError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)

    ordered = sorted(values)
    tasks = [(i, v, data, param, out, refine) for i, v in enumerate(ordered)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_point, tasks))
    else:
        rows = [_sweep_point(t) for t in tasks]

    columns = ["value", "status", "error"]
    for row in rows:
        columns += [k for k in row if k not in columns]
    series = {c: [row.get(c, "") for row in rows] for c in columns}
    try:
        postproc.export_csv(series, Path(out) / "sweep.csv")
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    for row in rows:
        print(f"{param} = {row['value']:.6g}: {row['status']}")
    return EXIT_SOLVER if any(r["status"] != "ok" for r in rows) else EXIT_OK


def _values(text: str) -> list:
    if not text.strip():
        return []
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gilsim", description="Axisymmetric field simulation of graded GIL spacers.")
    p.add_argument("--version", action="version", version=f"gilsim {__version__}")
    p.add_argument("--print-default-config", nargs="?", const=ScenarioKind.DC_ON.value, metavar="KIND",
                   choices=[k.value for k in ScenarioKind],
                   help="print the default JSON config for a scenario kind and exit")
    sub = p.add_subparsers(dest="command")
    for name, help_ in (("mesh", "build and export the mesh"), ("run", "run a scenario"),
                        ("sweep", "run a scenario over values of one parameter")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", type=Path, help="JSON config (defaults when omitted)")
        sp.add_argument("--out", type=Path, default=Path("gilsim-out"), help="output directory")
        sp.add_argument("--refine", type=int, default=0, help="extra uniform refinement levels")
        sp.add_argument("--jobs", type=int, default=1, help="parallel sweep points")
        if name == "sweep":
            sp.add_argument("--param", help="dotted config path, e.g. variants.1.profiles.0.max_multiplier")
            sp.add_argument("--values", type=_values, default=[], help="comma-separated values")
    return p


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    if args.print_default_config:
        print(json.dumps(cfgmod.default_config(args.print_default_config), indent=2))
        return EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    if args.refine < 0 or args.jobs < 1:
        print("error: --refine must be >= 0 and --jobs >= 1", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "mesh":
        return cmd_mesh(args.config, args.out, args.refine)
    if args.command == "run":
        return cmd_run(args.config, args.out, args.refine)
    return cmd_sweep(args.config, args.out, args.param, args.values, args.jobs, args.refine)


if __name__ == "__main__":
    sys.exit(main())
