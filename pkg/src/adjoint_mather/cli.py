"""Command line entry point: ``adjoint-mather {scenarios,run,sweep,check}``.

Exit codes: 0 all checks pass, 2 check failure, 3 solver failure, 4 config error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import checks
from .artifacts import read_csv, read_json
from .config import load_config, parse_config
from .errors import ConfigError
from .runner import WORKERS_ENV, default_workers, execute
from .scenarios import build_model, list_scenarios

EXIT_OK, EXIT_CHECKS, EXIT_SOLVER, EXIT_CONFIG = 0, 2, 3, 4


def _cmd_scenarios(args) -> int:
    cat = list_scenarios()
    if args.json:
        print(json.dumps(cat, indent=2))
    else:
        width = max(len(s["name"]) for s in cat)
        for s in cat:
            print(f"{s['name']:<{width}}  [{s['topic']}] {s['description']}")
    return EXIT_OK


def _summarize(manifest: dict, out) -> None:
    print(f"wrote {out / 'manifest.json'}")
    for f in manifest["failures"]:
        print(f"FAIL {f}")
    for e in manifest["errors"]:
        print(f"ERROR eps={e['eps']}: {e['error']}")
    print(f"exit status {manifest['exit_code']}")


def _cmd_run(args, workers: int) -> int:
    cfg = load_config(args.config)
    out = Path(args.output) if args.output else Path(cfg.output)
    manifest = execute(cfg, out, workers=workers)
    _summarize(manifest, out)
    return manifest["exit_code"]


def recheck(manifest_path) -> tuple[int, list[str]]:
    """Recompute every check from the CSV next to the manifest and compare."""
    manifest_path = Path(manifest_path)
    man = read_json(manifest_path)
    base = manifest_path.parent
    problems = []
    for name in man["files"].values():
        if not (base / name).exists():
            problems.append(f"missing file {name}")
    if problems:
        return EXIT_CHECKS, problems
    cfg = parse_config(man["config"])
    rows = read_csv(base / man["files"]["rows"])
    uc = build_model(cfg.model).convexity_class == "uniformly-convex"
    verdict = checks.evaluate(rows, cfg.expectations, man["dim"], uc)
    recorded = man["checks"]
    if verdict["rows"] != recorded["rows"] or verdict["sweep"] != recorded["sweep"]:
        problems.append("manifest pass/fail booleans disagree with checks recomputed from the CSV")
    problems += [f"FAIL {f}" for f in verdict["failures"]]
    if verdict["solver_failures"]:
        return EXIT_SOLVER, problems
    return (EXIT_CHECKS if problems else EXIT_OK), problems


def _cmd_check(args) -> int:
    try:
        code, problems = recheck(args.manifest)
    except FileNotFoundError as exc:
        raise ConfigError(f"cannot read manifest: {exc}") from exc
    for p in problems:
        print(p)
    print("consistent, all checks pass" if code == EXIT_OK else f"exit status {code}")
    return code


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="adjoint-mather", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("scenarios", help="list the built-in scenarios")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    for name, helptext in (("run", "run a config serially"), ("sweep", "run a config with a worker pool")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("config")
        p.add_argument("-o", "--output", help="output directory (overrides the config)")
        if name == "sweep":
            p.add_argument("-j", "--workers", type=int, help=f"worker processes (default ${WORKERS_ENV} or min(4, cpus))")
    p = sub.add_parser("check", help="recompute checks from a manifest's CSV files")
    p.add_argument("manifest")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "scenarios":
            return _cmd_scenarios(args)
        if args.command == "run":
            return _cmd_run(args, 1)
        if args.command == "sweep":
            return _cmd_run(args, args.workers or default_workers())
        return _cmd_check(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
