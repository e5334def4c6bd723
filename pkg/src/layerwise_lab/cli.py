"""Command-line entry point: ``layerwise-lab {run,curves,audit,hierarchies}``.

Exit codes: 0 success, 1 failure (training error, failed audit), 2 refused
(bad config, unmet precondition).
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .architecture import HierarchySpec, check_acceleration, conv_mass, enumerate_hierarchies, parse_hierarchy
from .config import ConfigError, load_config

log = logging.getLogger("layerwise_lab")

EXIT_OK, EXIT_FAIL, EXIT_REFUSED = 0, 1, 2


def _seed_list(text: str) -> list[int]:
    try:
        seeds = [int(s) for s in text.replace("[", "").replace("]", "").split(",") if s.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from e
    if not seeds:
        raise argparse.ArgumentTypeError("seed list must be non-empty")
    return seeds


def _load(args):
    cfg = load_config(args.config)
    if getattr(args, "seeds", None):
        cfg = replace(cfg, seeds=args.seeds, defaulted=[k for k in cfg.defaulted if k != "seeds"])
    if getattr(args, "out", None):
        cfg = replace(cfg, out=args.out, defaulted=[k for k in cfg.defaulted if k != "out"])
    return cfg


def cmd_run(args) -> int:
    from .experiment import run_experiment

    cfg = _load(args)
    try:
        result = run_experiment(cfg)
    except (FileNotFoundError, ConfigError) as e:
        log.error("%s", e)
        return EXIT_REFUSED
    except Exception as e:  # partial CSVs stay on disk
        log.exception("training failed: %s", e)
        return EXIT_FAIL
    print(result.summary, end="")
    print(f"wrote {result.out_dir}")
    return EXIT_OK


def cmd_curves(args) -> int:
    from .experiment import emit_curves

    try:
        for p in emit_curves(args.csv, args.out):
            print(p)
    except (ValueError, KeyError) as e:
        log.error("%s", e)
        return EXIT_FAIL
    return EXIT_OK


def cmd_audit(args) -> int:
    from .experiment import audit_gradient_isolation

    cfg = _load(args)
    try:
        report = audit_gradient_isolation(cfg, n_batches=args.batches, skip_detach=args.skip_detach)
    except ValueError as e:
        log.error("%s", e)
        return EXIT_REFUSED
    print(report.describe())
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_hierarchies(args) -> int:
    if args.action == "check":
        for text in args.hierarchy:
            d = parse_hierarchy(text)
            spec = HierarchySpec(tuple(d), tuple([1] * len(d)), shallow_depth=args.k)
            print(f"{spec.notation()} k={spec.k} accelerated={str(check_acceleration(spec)).lower()} "
                  f"mass={conv_mass(spec)}")
        return EXIT_OK
    constraint = "accelerated" if args.accelerated else "any"
    specs = enumerate_hierarchies(args.n, args.m, constraint, shallow_depth=args.k,
                                  input_resolution=args.resolution)
    for spec in specs:
        print(f"{spec.notation()} mass={conv_mass(spec)} shallow_mass={conv_mass(spec, shallow_only=True)} "
              f"accelerated={str(check_acceleration(spec)).lower()}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="layerwise-lab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train every (seed, mode) pair and summarize")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--out", help="output directory (overrides config)")
    run.add_argument("--seeds", type=_seed_list, help="comma-separated seeds (overrides config)")
    run.set_defaults(func=cmd_run)

    curves = sub.add_parser("curves", help="two-column epoch/test-error files from run CSVs")
    curves.add_argument("csv", nargs="+", type=Path)
    curves.add_argument("--out", help="directory for the curve files (default: next to each CSV)")
    curves.set_defaults(func=cmd_curves)

    audit = sub.add_parser("audit", help="gradient-isolation and inference-equivalence audit")
    audit.add_argument("--config", required=True, type=Path)
    audit.add_argument("--seeds", type=_seed_list)
    audit.add_argument("--batches", type=int, default=3)
    audit.add_argument("--skip-detach", type=int, action="append", default=[], metavar="BLOCK",
                       help=argparse.SUPPRESS)  # mutation fixture
    audit.set_defaults(func=cmd_audit)

    hier = sub.add_parser("hierarchies", help="enumerate or check stage hierarchies")
    hsub = hier.add_subparsers(dest="action", required=True)
    enum = hsub.add_parser("enumerate")
    enum.add_argument("--n", type=int, required=True, help="total convolution units")
    enum.add_argument("--m", type=int, required=True, help="number of stages")
    enum.add_argument("--k", type=int, default=None, help="shallow depth (default m//2)")
    enum.add_argument("--resolution", type=int, default=32)
    enum.add_argument("--accelerated", action="store_true")
    check = hsub.add_parser("check")
    check.add_argument("hierarchy", nargs="+")
    check.add_argument("--k", type=int, default=None)
    hier.set_defaults(func=cmd_hierarchies)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        log.error("%s: %s", getattr(args, "config", ""), e)
        return EXIT_REFUSED
    except ValueError as e:
        log.error("%s", e)
        return EXIT_REFUSED


if __name__ == "__main__":
    sys.exit(main())
