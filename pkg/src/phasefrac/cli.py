"""Command-line front end.

Exit codes: 0 success, 2 invalid input (config, override, scenario name or
usage), 3 solver or invariant failure during a run.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import io as pio
from . import postprocess as pp
from .linsolve import SolverError
from .scenario import (
    BUILTINS, PROFILES, ConfigError, apply_overrides, build_problem, builtin_scenario, config_hash,
    parse_config, serialize, to_document,
)
from .stepper import InvariantViolation, StepFailure, run

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_FAILED = 3


def _err(msg):
    print(f"error: {msg}", file=sys.stderr)


def _load(args):
    """Config from ``--scenario`` or ``--config`` with overrides applied."""
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError([("", f"cannot read {args.config}: {exc.strerror or exc}")]) from None
        cfg = parse_config(text)
    else:
        try:
            cfg = builtin_scenario(args.scenario, args.profile)
        except KeyError as exc:
            raise ConfigError([("", exc.args[0])]) from None
    if args.overrides:
        cfg = apply_overrides(cfg, args.overrides)
    return cfg


def _progress_line(state, report, info):
    parts = [f"step {state.step:6d}", f"t {state.t:.6e}", f"iters {report.iterations:4d}"]
    if "reaction" in info:
        parts.append(f"reaction {info['reaction']:.6e}")
    if "tips" in info:
        speed = info["tip_speed"]
        parts.append(f"tips {info['tips']}")
        parts.append("speed " + ("-" if math.isnan(speed) else f"{speed:.1f}"))
    return "  ".join(parts)


def cmd_run(args) -> int:
    try:
        cfg = _load(args)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_INVALID
    threads = args.threads or os.cpu_count() or 1
    t0 = time.perf_counter()
    try:
        problem, controls, outputs = build_problem(cfg, threads=threads)
    except (ConfigError, ValueError) as exc:
        _err(str(exc))
        return EXIT_INVALID
    t_setup = time.perf_counter() - t0
    if args.snapshot_every is not None:
        outputs.snapshot_every = args.snapshot_every
    series = [k for k, on in (("load-displacement", cfg.outputs.series.load_displacement),
                              ("energies", cfg.outputs.series.energies),
                              ("crack-tip", cfg.outputs.series.crack_tip)) if on]
    try:
        writer = pio.RunWriter(args.output, series=series)
    except pio.OutputError as exc:
        _err(str(exc))
        return EXIT_INVALID
    (writer.dir / "config.json").write_text(serialize(cfg) + "\n")
    writer.files.append({"path": "config.json", "kind": "config"})

    def progress(state, report, info):
        if not args.quiet:
            print(_progress_line(state, report, info), flush=True)

    status, message, result = "completed", "", None
    try:
        result = run(problem, controls, outputs, sink=writer, progress=progress, max_steps=args.max_steps)
    except (StepFailure, SolverError, InvariantViolation) as exc:
        status, message = "failed", str(exc)
        _err(message)
    timings = {"setup_s": t_setup, "total_s": time.perf_counter() - t0}
    extra = {
        "status": status,
        "scenario": cfg.name,
        "profile": args.profile if args.scenario else None,
        "overrides": list(args.overrides or []),
        "threads": threads,
        "version": __version__,
    }
    if result is not None:
        writer.write_series(result)
        timings["solve_s"] = result.wall_time
        extra.update(
            steps=result.steps,
            stagger_iterations=int(sum(result.iterations)),
            phi_range=list(result.phi_range),
            history_monotone=result.history_monotone,
            dissipation_monotone=result.dissipation_monotone,
            warnings=result.warnings,
        )
    else:
        extra["error"] = message
    writer.write_manifest(config_hash(cfg), timings, extra)
    if args.json:
        print(json.dumps({"status": status, "output": str(writer.dir), "config_hash": config_hash(cfg)}))
    return EXIT_OK if status == "completed" else EXIT_FAILED


def cmd_validate(args) -> int:
    try:
        text = sys.stdin.read() if args.path == "-" else Path(args.path).read_text()
    except OSError as exc:
        _err(f"cannot read {args.path}: {exc.strerror or exc}")
        return EXIT_INVALID
    try:
        cfg = parse_config(text)
    except ConfigError as exc:
        if args.json:
            print(json.dumps({"valid": False, "errors": [{"path": p, "message": m} for p, m in exc.errors]}))
        _err(str(exc))
        return EXIT_INVALID
    if args.json:
        print(json.dumps({"valid": True, "name": cfg.name, "config_hash": config_hash(cfg)}))
    else:
        print(f"valid: {cfg.name} ({config_hash(cfg)[:12]})")
    return EXIT_OK


def cmd_list(args) -> int:
    entries = []
    for name, (desc, _) in BUILTINS.items():
        entry = {"name": name, "description": desc, "profiles": list(PROFILES)}
        if args.json or args.dump:
            entry["configs"] = {p: to_document(builtin_scenario(name, p)) for p in PROFILES}
        entries.append(entry)
    if args.dump:
        out = Path(args.dump)
        out.mkdir(parents=True, exist_ok=True)
        for e in entries:
            for p, doc in e["configs"].items():
                (out / f"{e['name']}.{p}.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    if args.json:
        print(json.dumps(entries, indent=2, sort_keys=True))
    else:
        width = max(len(e["name"]) for e in entries)
        for e in entries:
            print(f"{e['name']:<{width}}  {e['description']}  [{'|'.join(e['profiles'])}]")
    return EXIT_OK


def summarize(directory) -> dict:
    """Key observables of a finished output directory."""
    d = Path(directory)
    manifest = json.loads((d / "manifest.json").read_text())
    out = {"config_hash": manifest["config_hash"], "status": manifest.get("status")}
    f = d / pio.SERIES_FILES["load-displacement"]
    if f.is_file():
        _, a = pio.read_series(f)
        if a.size:
            i = int(np.argmax(a[:, 3]))
            out["peak_reaction"] = float(a[i, 3])
            out["peak_displacement"] = float(a[i, 2])
            out["final_reaction"] = float(a[-1, 3])
    f = d / pio.SERIES_FILES["energies"]
    if f.is_file():
        _, a = pio.read_series(f)
        if a.size:
            out["final_elastic_energy"] = float(a[-1, 2])
            out["final_dissipated_energy"] = float(a[-1, 3])
    f = d / pio.SERIES_FILES["crack-tip"]
    if f.is_file():
        _, a = pio.read_series(f)
        if a.size:
            speeds = a[:, 4][np.isfinite(a[:, 4])]
            out["max_tip_speed"] = float(speeds.max()) if speeds.size else None
            last = a[a[:, 0] == a[-1, 0]]
            out["final_tip_count"] = int(last.shape[0])
            out["final_tips"] = last[:, 2:4].tolist()
            if a.shape[0] >= 2:
                out["crack_angle_deg"] = float(pp.crack_angle(a[:, 2:4]))
    return out


def cmd_postprocess(args) -> int:
    try:
        summary = summarize(args.directory)
    except (OSError, KeyError, ValueError) as exc:
        _err(f"cannot post-process {args.directory}: {exc}")
        return EXIT_INVALID
    if args.json:
        print(json.dumps(summary, indent=2, sort_keys=True))
    else:
        for k, v in summary.items():
            print(f"{k}: {v}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="phasefrac", description="Phase-field brittle fracture simulations.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a built-in scenario or a config file")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", help="built-in scenario name (see 'list')")
    src.add_argument("--config", help="path of a JSON scenario document")
    r.add_argument("--profile", choices=PROFILES, default="desk", help="resolution of a built-in (default desk)")
    r.add_argument("-o", "--output", default="out", help="output directory (default ./out)")
    r.add_argument("--threads", type=int, default=None, help="assembly threads (default: all cores)")
    r.add_argument("--set", dest="overrides", action="append", metavar="KEY=VALUE",
                   help="override a config field by dotted path; repeatable")
    r.add_argument("--snapshot-every", type=int, default=None, help="write a VTK snapshot every N steps")
    r.add_argument("--max-steps", type=int, default=None, help="stop after N steps")
    r.add_argument("--quiet", action="store_true", help="suppress per-step progress lines")
    r.add_argument("--json", action="store_true", help="print a JSON status line at the end")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("validate", help="check a JSON scenario document")
    v.add_argument("path", help="document path, or - for stdin")
    v.add_argument("--json", action="store_true")
    v.set_defaults(func=cmd_validate)

    ls = sub.add_parser("list", help="list built-in scenarios")
    ls.add_argument("--json", action="store_true", help="machine-readable output including both configs")
    ls.add_argument("--dump", metavar="DIR", help="write every built-in config as NAME.PROFILE.json")
    ls.set_defaults(func=cmd_list)

    pp_ = sub.add_parser("postprocess", help="summarize an output directory")
    pp_.add_argument("directory")
    pp_.add_argument("--json", action="store_true")
    pp_.set_defaults(func=cmd_postprocess)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", None) is not None and args.threads < 1:
        _err("--threads must be at least 1")
        return EXIT_INVALID
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
