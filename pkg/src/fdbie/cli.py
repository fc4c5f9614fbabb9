"""Command-line entry point: ``fdbie <verb> [options]``.

Verbs: ``solve``, ``converge``, ``props <suite>``, ``spectrum``,
``geom-dump`` and ``accept``.  The exit status is 0 exactly when every
executed check passes.
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import sys
from pathlib import Path

import yaml
from threadpoolctl import threadpool_limits

from .errors import ConfigError, FdbieError
from .harness import (
    ACCEPTANCE,
    FORMATS,
    SUITES,
    StudyConfig,
    emit_report,
    render,
    run_acceptance,
    run_convergence,
    run_geometry_dump,
    run_property_suite,
    run_solve,
    run_spectrum,
)

log = logging.getLogger("fdbie")


def load_config(path) -> dict:
    """Read a YAML config file into a plain mapping."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping at top level")
    return data


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file (see docs/config.md)")
    common.add_argument("--n", type=int, help="grid resolution (base resolution for suites)")
    common.add_argument("--delta", type=float, help="clamping distance for the theoretical boundary points")
    common.add_argument("--method", choices=("gmres", "fixed_point", "dense_direct"), help="outer solver")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--out", help="directory for report files")
    common.add_argument("--format", choices=FORMATS, action="append", help="report format (repeatable)")
    common.add_argument("--single-thread", action="store_true", help="sequential, single-threaded execution")
    common.add_argument("--timing", action="store_true", help="include wall-clock times in reports")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="fdbie", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)
    sub.add_parser("solve", parents=[common], help="one Dirichlet solve against the reference solution")
    sub.add_parser("converge", parents=[common], help="convergence study over the resolution list")
    props = sub.add_parser("props", parents=[common], help="property suite")
    props.add_argument("suite", choices=sorted(SUITES))
    sub.add_parser("spectrum", parents=[common], help="spectra of the boundary operators")
    sub.add_parser("geom-dump", parents=[common], help="write the cut-cell geometry as JSON")
    accept = sub.add_parser("accept", parents=[common], help="acceptance criteria")
    accept.add_argument("criteria", nargs="*", type=int, help=f"subset of {sorted(ACCEPTANCE)}")
    return parser


def make_config(args) -> StudyConfig:
    data = load_config(args.config) if args.config else {}
    if args.n is not None:
        if args.verb == "converge":
            data["resolutions"] = [args.n]
        else:
            data["base_n"] = args.n
            data["resolutions"] = [args.n]
    for key, val in (("delta", args.delta), ("method", args.method), ("seed", args.seed), ("out_dir", args.out),
                     ("formats", args.format)):
        if val is not None:
            data[key] = val
    if args.single_thread:
        data["single_thread"] = True
    if args.timing:
        data["include_timing"] = True
    return StudyConfig.from_mapping(data)


def _run(args, cfg):
    if args.verb == "solve":
        return run_solve(cfg), None
    if args.verb == "converge":
        return run_convergence(cfg), None
    if args.verb == "props":
        return run_property_suite(args.suite, cfg), None
    if args.verb == "spectrum":
        return run_spectrum(cfg, out_dir=cfg.out_dir), None
    if args.verb == "geom-dump":
        return run_geometry_dump(cfg)
    if args.verb == "accept":
        bad = [k for k in args.criteria if k not in ACCEPTANCE]
        if bad:
            raise ConfigError(f"unknown criteria {bad}")
        return run_acceptance(args.criteria or None), None
    raise ConfigError(f"unknown verb {args.verb}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        cfg = make_config(args)
        limit = threadpool_limits(1) if cfg.single_thread else contextlib.nullcontext()
        with limit:
            report, extra = _run(args, cfg)
        stem = args.verb.replace("-", "_") + (f"_{args.suite}" if args.verb == "props" else "")
        if cfg.out_dir:
            paths = emit_report(report, cfg.out_dir, cfg.formats, stem, cfg.include_timing)
            if extra is not None:
                path = Path(cfg.out_dir) / "geometry.json"
                path.write_text(extra + "\n")
                paths.append(path)
            for p in paths:
                log.info("wrote %s", p)
        elif extra is not None:
            sys.stdout.write(extra + "\n")
        sys.stdout.write(render(report, "text", cfg.include_timing))
    except FdbieError as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return 2
    return 0 if report.passed else 1


if __name__ == "__main__":
    raise SystemExit(main())
