"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 numerical non-convergence,
4 I/O error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import PRESETS, ScenarioConfig, parse_config
from .errors import ConfigurationError, ConvergenceError, DomainError, FieldFileError
from .pipeline import STAGES, run_pipeline, simulate

log = logging.getLogger("dissratchet")

EXIT_OK, EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_IO = 0, 2, 3, 4

# flag name -> (config key, type)
_FLAGS = {
    "--name": ("name", str), "--k": ("k", float), "--gamma": ("gamma", float),
    "--a": ("a", float), "--phi": ("phi", float), "--hbar-eff": ("hbar_eff", float),
    "--hbar-eff-pf": ("hbar_eff_pf", float), "--p-max": ("p_max", float), "--M": ("M", int),
    "--n-tr": ("n_tr", int), "--noise-variance": ("noise_variance", float),
    "--noise-truncation": ("noise_truncation", float), "--eig-count": ("eig_count", int),
    "--eig-subspace": ("eig_subspace", int), "--eig-tol": ("eig_tol", float),
    "--eig-max-restarts": ("eig_max_restarts", int), "--seed": ("seed", int),
    "--output-dir": ("output_dir", str), "--chord-radius": ("chord_radius", float),
    "--overlap-depth": ("overlap_depth", int),
}


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--preset", choices=sorted(PRESETS), help="start from a reference scenario")
    p.add_argument("--config", help="JSON or YAML scenario file")
    for flag, (key, typ) in _FLAGS.items():
        p.add_argument(flag, dest=key, type=typ, default=None)
    p.add_argument("--match-quantum-grid", dest="match_quantum_grid", action="store_true",
                   default=None, help="use the quantum grid (M = N) for classical runs")
    p.add_argument("--save-transfer-matrix", dest="save_transfer_matrix", action="store_true",
                   default=None)
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (overrides DISSRATCHET_THREADS)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dissratchet", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classical-spectrum", help="leading Perron-Frobenius spectrum (Ulam)")
    p.add_argument("--noiseless", action="store_true", help="omit the thermal noise")
    _add_common(p)
    p = sub.add_parser("quantum-spectrum", help="leading spectrum of the quantum channel")
    _add_common(p)
    p = sub.add_parser("wigner", help="quantum eigenvectors and their Wigner fields")
    _add_common(p)
    p = sub.add_parser("overlap", help="classical/quantum eigenvector overlap table (matched grids)")
    _add_common(p)
    p = sub.add_parser("simulate", help="direct ensemble simulation")
    p.add_argument("--points", type=int, default=100_000)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--transient", type=int, default=200)
    p.add_argument("--noiseless", action="store_true")
    _add_common(p)
    p = sub.add_parser("report", help="run any subset of pipeline stages")
    p.add_argument("--stages", nargs="+", choices=STAGES, default=list(STAGES))
    _add_common(p)
    return parser


def make_config(args) -> ScenarioConfig:
    overrides = {key: getattr(args, key) for key, _ in _FLAGS.values()}
    for key in ("match_quantum_grid", "save_transfer_matrix"):
        overrides[key] = getattr(args, key)
    if args.config:
        base = parse_config(args.config)
        if args.preset:
            raise ConfigurationError("use either --preset or --config, not both")
        return base.with_overrides(**overrides)
    if args.preset:
        return ScenarioConfig.preset(args.preset, **overrides)
    missing = [f for f, key in (("--name", "name"), ("--k", "k"), ("--gamma", "gamma"))
               if overrides[key] is None]
    if missing:
        raise ConfigurationError(f"without --preset or --config, {', '.join(missing)} required")
    return ScenarioConfig(**{k: v for k, v in overrides.items() if v is not None})


def _dispatch(args) -> str:
    config = make_config(args)
    workers = args.threads
    if workers is not None:
        if workers < 1:
            raise ConfigurationError("--threads must be positive")
        os.environ["DISSRATCHET_THREADS"] = str(workers)
    cmd = args.command
    if cmd == "classical-spectrum":
        stages = ["classical" if args.noiseless else "classical-thermal"]
    elif cmd == "quantum-spectrum":
        stages = ["quantum"]
    elif cmd == "wigner":
        stages = ["quantum", "wigner"]
    elif cmd == "overlap":
        if not config.match_quantum_grid:
            config = config.with_overrides(match_quantum_grid=True)
        stages = ["classical-thermal", "quantum", "wigner", "compare"]
    elif cmd == "simulate":
        out = simulate(config, args.points, args.steps, args.transient, workers=workers,
                       thermal=not args.noiseless)
        return str(out)
    else:
        stages = args.stages
    return str(run_pipeline(config, stages, workers=workers))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        out = _dispatch(args)
    except (ConfigurationError, DomainError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"no convergence: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (FieldFileError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
