"""Command-line entry point.

Exit codes: 0 success, 1 a flagged row, failed gate or failed criterion,
2 a configuration error.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import List, Optional

from ..errors import ConfigError, FluctGeomError, GateFailure
from .config import RunConfig
from .reports import emit_surface_mesh, flagged_rows, run_convergence_scan, run_report

COMMANDS = ("curvature", "partition", "theorems", "convergence", "surface", "weight-grid", "entropy", "verify")


def _theta_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse theta list {text!r}") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML run configuration")
    common.add_argument("--seed", type=int, help="override the seed list with one seed")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--family", metavar="ID", help="family id (gaussian-nd, axial-2d, cauchy-1d, xy-coupled)")
    common.add_argument("--theta", type=_theta_list, metavar="LIST", help="comma-separated theta grid")
    common.add_argument("--workers", type=int, default=1, help="worker processes for theta grids")

    parser = _Parser(prog="fluctgeom", description="Fluctuation-geometry workbench")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=f"run the {name} {'suite' if name == 'verify' else 'report'}")
    return parser


def load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    d = cfg.to_dict()
    if args.family:
        d["family"] = {"id": args.family, "options": d["family"]["options"] if args.family == cfg.family else {}}
    if args.theta:
        d["theta"] = args.theta
    if args.seed is not None:
        d["seeds"] = [args.seed]
    if args.out:
        d["output"] = {"dir": args.out}
    return RunConfig.from_dict(d)


def _write(table, cfg: RunConfig, name: str) -> int:
    path = table.write(os.path.join(cfg.out_dir, name))
    bad = flagged_rows(table)
    print(f"wrote {path} ({len(table.rows)} rows, {bad} flagged)")
    return 1 if bad else 0


def run(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "verify":
        from .acceptance import run_all

        results = run_all()
        failed = [r.number for r in results if not r.passed]
        print("verify: all criteria passed" if not failed else f"verify: failed criteria {failed}")
        return 1 if failed else 0
    try:
        cfg = load_config(args)
        cfg.check_writable()
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "convergence":
            if cfg.family != "axial-2d":
                raise ConfigError("the convergence scan needs --family axial-2d")
            return _write(run_convergence_scan(cfg, workers=args.workers), cfg, "convergence.csv")
        if args.command == "surface":
            status = 0
            for theta in cfg.theta:
                table = emit_surface_mesh(theta, cfg.resolution)
                table.metadata["config_sha256"] = cfg.digest()
                status |= _write(table, cfg, f"surface-theta{theta:g}.csv")
            return status
        return _write(run_report(cfg, args.command), cfg, f"{args.command}.csv")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except GateFailure as exc:
        print(f"family gate failed: {exc}", file=sys.stderr)
        return 1
    except (FluctGeomError, ValueError) as exc:
        print(f"{args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())
