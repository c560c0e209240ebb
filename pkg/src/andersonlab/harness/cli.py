"""Run Anderson-model experiments from the command line.

Exit codes: 0 success, 1 an in-run check tripped, 2 invalid configuration,
3 resource cap exceeded or output not writable.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from importlib.metadata import PackageNotFoundError, version

from threadpoolctl import threadpool_limits

from ..lattice import LatticeError, VolumeCapError
from . import experiments
from .config import COMMON, DEFAULTS, EXPERIMENTS, OUTPUT_ENV, ConfigError, build_config, read_config_file
from .output import emit_manifest, emit_results

log = logging.getLogger("andersonlab")

EXIT_OK, EXIT_FLAGGED, EXIT_CONFIG, EXIT_RESOURCE = 0, 1, 2, 3

HELP = {
    "dim": "lattice dimension d",
    "L": "side length (even; divisible by 4 for probe-heat/probe-decoupling)",
    "dist": "single-site law: uniform:0,b or piecewise:e0,e1,...:r0,r1,...",
    "samples": "number of disorder realizations",
    "seed": "master seed",
    "workers": "worker processes (results do not depend on this)",
    "output": f"output .csv path or directory (default ${OUTPUT_ENV} or ./results)",
    "emin": "lowest grid energy",
    "emax": "highest grid energy",
    "npoints": "number of grid energies",
    "bins": "number of DOS bins over [0, 4d + sup supp]",
    "bandwidth": "Gaussian smoothing bandwidth (default 2x bin width)",
    "interval": "energy interval lo,hi (repeatable)",
    "energies": "comma-separated energies",
    "site": "site index (or comma-separated coordinates)",
    "nodes": "Gauss-Legendre nodes per density piece",
    "source": "curve to fit: ids or dos",
    "window": "fit window lo,hi inside (0,1)",
    "bin_width": "DOS bin width for --source dos",
    "min_count": "minimum pooled count for a usable point",
    "ell_max": "flag the run if any usable exponent exceeds this or the trend is not increasing",
    "energy": "reference energy",
    "half_width": "rescaled window half-width (default: --spacings expected spacings)",
    "spacings": "window half-width in expected spacings",
    "cases": "number of generated cases",
    "max_dim": "largest matrix dimension",
    "fit_range": "radius range lo,hi for the decay fit (default 2,L/4)",
    "t": "comma-separated heat times",
    "eps": "epsilon in (0, d/2)",
    "k": "comma-separated coordinates of k (default: random per realization)",
}


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-") if name not in ("L",) else "--L"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="andersonlab", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="experiment", metavar="EXPERIMENT")
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment",
                           formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        p.add_argument("--config", help="sectioned key-value config file; flags override it")
        for key, default in {**COMMON, **DEFAULTS[name]}.items():
            kwargs = {"dest": key, "default": None, "help": f"{HELP.get(key, key)} (default: {default})"}
            if key == "interval":
                kwargs["action"] = "append"
            names = [_flag(key)]
            if key == "dim":
                names.append("--d")
            p.add_argument(*names, **kwargs)
    return parser


def parse_config(argv: list[str]):
    """Merge file values and flags into a validated :class:`ExperimentConfig`."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.experiment is None:
        parser.print_help(sys.stderr)
        raise ConfigError("experiment", "no experiment given")
    values = read_config_file(args.config) if args.config else {}
    if values.get("experiment") not in (None, args.experiment):
        raise ConfigError("experiment", f"config file names {values['experiment']!r}, command line {args.experiment!r}")
    flags = {k: v for k, v in vars(args).items() if k not in ("config", "verbose") and v is not None}
    values.update(flags)
    return build_config(values), args.verbose


def run_experiment(config) -> int:
    csv_path, manifest_path = config.output_paths()
    start = time.perf_counter()
    try:
        with threadpool_limits(1):
            result = experiments.run(config)
    except VolumeCapError as exc:
        log.error("resource cap exceeded: %s", exc)
        return EXIT_RESOURCE
    except (LatticeError, ValueError) as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_CONFIG
    elapsed = time.perf_counter() - start
    try:
        digest = emit_results(result.rows, result.columns, csv_path)
        emit_manifest(
            {
                "config_hash": config.hash,
                "config": config.canonical(),
                "seed": config.seed,
                "tool_version": _version(),
                "wall_clock_seconds": elapsed,
                "results": [{"file": csv_path.name, "sha256": digest, "columns": result.columns}],
                "summary": result.summary,
                "flags": result.flags,
            },
            manifest_path,
        )
    except OSError as exc:
        log.error("cannot write results: %s", exc)
        return EXIT_RESOURCE
    for flag in result.flags:
        log.warning("FLAG: %s", flag)
    log.info("wrote %s and %s", csv_path, manifest_path)
    return EXIT_FLAGGED if result.flags else EXIT_OK


def _version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "unknown"


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s", stream=sys.stderr)
    argv = sys.argv[1:] if argv is None else argv
    try:
        config, verbose = parse_config(argv)
    except ConfigError as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_CONFIG
    except SystemExit as exc:  # argparse usage errors
        return EXIT_CONFIG if exc.code else EXIT_OK
    if verbose:
        log.setLevel(logging.DEBUG)
    return run_experiment(config)


if __name__ == "__main__":
    sys.exit(main())
