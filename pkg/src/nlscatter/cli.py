"""Command line: ``nlscatter {solve,verify,export,fixtures-regen}``.

Exit codes: 0 ok, 2 configuration error, 3 numerical failure, 4 excluded case.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .errors import NLScatterError

SUITE_NAMES = ("linear", "module", "algebra", "nonlinear", "scattering", "all")


def _cmd_solve(args) -> int:
    from .config import load_config
    from .runner import cmd_solve
    cfg = load_config(args.config, args.set)
    base = Path(args.config).parent if Path(args.config).exists() else None
    rec = cmd_solve(cfg, args.runs, base_dir=base,
                    save_fields=False if args.no_fields else None)
    sc = rec.norms["scattering"]
    print(json.dumps({"run_dir": str(rec.run_dir), "config_hash": rec.config_hash,
                      "iterations": rec.diagnostics["iterations"],
                      "max_ratio": rec.diagnostics["max_ratio"],
                      "wk_norm_f": sc["wk_norm_f"], "wk_norm_f_tilde": sc["wk_norm_f_tilde"],
                      "verdict": sc["verdict"]["verdict"]}, indent=2))
    return 0


def _cmd_verify(args) -> int:
    from .suites import run_suite, write_reports
    results = run_suite(args.suite)
    for r in results:
        print(r.line(), flush=True)
    if args.out:
        for p in write_reports(args.suite, results, args.out):
            print(f"wrote {p}")
    return 0 if all(r.passed for r in results) else 3


def _cmd_export(args) -> int:
    from .runner import cmd_export
    for p in cmd_export(args.run_dir, args.what, t=args.t):
        print(p)
    return 0


def _cmd_regen(args) -> int:
    from .fixtures import fixture_root, regenerate
    for name in regenerate(args.only or None, args.root):
        print(f"regenerated {name} under {args.root or fixture_root()}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nlscatter", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve a run configuration and write a run directory")
    p.add_argument("config", help="JSON config path or bundled config name")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a field, e.g. solver.tol=1e-8 (repeatable)")
    p.add_argument("--runs", default="runs", help="root of run directories (default: runs)")
    p.add_argument("--no-fields", action="store_true", help="skip binary field dumps")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("verify", help="run an acceptance suite")
    p.add_argument("suite", choices=SUITE_NAMES)
    p.add_argument("--out", help="directory for the JSON/CSV summary")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("export", help="write plot-ready files from a run directory")
    p.add_argument("run_dir")
    p.add_argument("what", choices=("fields", "scattering", "norms"))
    p.add_argument("--t", type=float, default=0.0, help="time slice for 'fields' (default 0)")
    p.set_defaults(func=_cmd_export)

    p = sub.add_parser("fixtures-regen", help="recompute frozen oracle fixtures")
    p.add_argument("--only", action="append", default=[], metavar="NAME")
    p.add_argument("--root", help="fixture directory (default: package fixtures or $NLSCATTER_FIXTURES)")
    p.set_defaults(func=_cmd_regen)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NLScatterError as exc:
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
