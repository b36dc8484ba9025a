"""Command-line front end.

Exit codes: 0 success, 2 configuration or assumption violation,
3 periodic compatibility, 4 solver failure, 5 analysis failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import io, pipeline
from .config import PRESETS, ConfigError, density_from_config, expand, load_config, resolve
from .density import verify_assumptions
from .exceptions import (AssumptionError, CompatibilityError, FieldFormatError, FitError, GridError, MalabError, NotSPDError,
                         QuadratureError, SolverError)

log = logging.getLogger("malab")

EXIT_OK, EXIT_CONFIG, EXIT_COMPAT, EXIT_SOLVER, EXIT_ANALYSIS = 0, 2, 3, 4, 5

COMMANDS = ("radial", "cell", "solve", "analyze", "experiment", "verify-assumptions")


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, CompatibilityError):
        return EXIT_COMPAT
    if isinstance(exc, (ConfigError, AssumptionError, FieldFormatError, GridError, NotSPDError)):
        return EXIT_CONFIG
    if isinstance(exc, (SolverError, QuadratureError)):
        return EXIT_SOLVER
    if isinstance(exc, FitError):
        return EXIT_ANALYSIS
    return EXIT_SOLVER


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="malab", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        src = s.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", type=Path, help="TOML or JSON config file")
        src.add_argument("--preset", choices=PRESETS, help="shipped preset")
        s.add_argument("--out", type=Path, required=True, help="output directory")
        s.add_argument("--threads", type=int, default=None, help="BLAS/OpenMP thread cap")
        s.add_argument("--tol", type=float, default=None, help="override solver and corrector tolerance")
        if name == "analyze":
            s.add_argument("inputs", nargs="*", type=Path, help="field files (.json sidecar or .f64)")
    return p


def _run(args) -> int:
    raw = load_config(args.config) if args.config else expand({"preset": args.preset})
    cfg = resolve(raw, tol=args.tol, threads=args.threads)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    chash = io.config_hash(cfg)
    io.write_json(cfg, out / "resolved_config.json")
    (out / "config_hash.txt").write_text(chash + "\n")
    cmd = args.command
    if cmd == "radial":
        rep = pipeline.run_radial(cfg, out)
    elif cmd == "cell":
        rep = pipeline.run_cell(cfg, out)
        rep.pop("_field", None)
        if not rep["passed"]:
            raise SolverError(f"corrector checks failed: {rep['checks']}")
    elif cmd == "solve":
        rep = pipeline.run_solve(cfg, out)
        if not rep["passed"]:
            raise SolverError(f"solve checks failed: {rep.get('checks')}")
    elif cmd == "analyze":
        rep = pipeline.run_analyze(cfg, out, args.inputs)
    elif cmd == "experiment":
        rep = pipeline.run_experiment(cfg, out, chash)
    else:
        spec = density_from_config(cfg["density"]) if "density" in cfg else None
        if spec is None:
            raise ConfigError("verify-assumptions needs a density table")
        ar = verify_assumptions(spec, int(cfg["verify"]["sample_count"]), int(cfg["seed"]))
        rep = ar.to_dict()
        io.write_json(rep, out / "assumptions.json")
        if not ar.passed:
            raise AssumptionError("density violates the structural assumptions")
    status = "passed" if rep.get("passed", True) else "completed with failed checks"
    print(f"{cmd}: {status}; results in {out}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        with threadpool_limits(limits=args.threads):
            return _run(args)
    except MalabError as exc:
        code = exit_code(exc)
        print(f"error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
