"""Command line entry point.

Exit codes: 0 success, 2 invalid configuration or arguments, 3 numerical
failure (infeasible LP, diverged training, domain error), 4 file errors
including missing outputs of a prerequisite stage.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .dso import LpInfeasibleError
from .network import ConfigurationError, DomainError
from .pipeline import STAGES, emit_plot_data, run_pipeline
from .pricing import TrainingDivergedError

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4

SUBCOMMANDS = {
    "simulate-qdue": ("qdue",),
    "solve-dso": ("dso",),
    "train-pricing": ("train",),
    "run-priced": ("priced",),
    "compare": ("compare",),
    "run": STAGES,
}


HELP = {
    "simulate-qdue": "user-equilibrium (logit) run",
    "solve-dso": "rolling-horizon LP control run",
    "train-pricing": "fit one cost regressor per border pair on user-equilibrium snapshots",
    "run-priced": "user-equilibrium run with predicted tolls",
    "compare": "metric tables against the user-equilibrium run",
    "run": "several stages in order (all by default)",
    "emit-plots": "per-figure CSV files under plots/",
}


def _stages(text: str) -> tuple[str, ...]:
    items = tuple(s.strip() for s in text.split(",") if s.strip())
    bad = [s for s in items if s not in STAGES]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown stage(s) {bad}; choose from {', '.join(STAGES)}")
    return items


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="mfdtoll",
        description="Multi-region MFD simulation, system-optimal routing and learned congestion tolls.",
        epilog="exit codes: 0 ok, 2 invalid config/arguments, 3 numerical failure, 4 file error",
    )
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)
    for name in [*SUBCOMMANDS, "emit-plots"]:
        sp = sub.add_parser(name, help=HELP[name])
        sp.add_argument("--config", default="zurich", help="preset name or YAML file (default: zurich)")
        sp.add_argument("--out", default="runs/zurich", type=Path, help="run directory")
        sp.add_argument("--seed", type=int, default=None, help="override the root seed")
        sp.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key, e.g. --set choice.mu=0.5")
        if name == "run":
            sp.add_argument("--stages", type=_stages, default=STAGES, help="comma-separated subset of stages")
        if name == "solve-dso":
            sp.add_argument("--dump-lp", action="store_true", help="write every LP in plain text")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        cfg = load_config(args.config, args.overrides, args.seed)
        if args.command == "emit-plots":
            files = emit_plot_data(args.out, cfg)
            print(f"wrote {len(files)} plot files to {args.out / 'plots'}")
            return EXIT_OK
        stages = args.stages if args.command == "run" else SUBCOMMANDS[args.command]
        manifest = run_pipeline(cfg, args.out, stages, dump_lp=getattr(args, "dump_lp", False))
        if "compare" in stages:
            for f in sorted((args.out / "compare").glob("*_vs_qdue.txt")):
                print(f"== {f.stem}")
                print(f.read_text())
        print(f"manifest: {manifest}")
        return EXIT_OK
    # DomainError is a ValueError, so the numerical branch must come first
    except (LpInfeasibleError, TrainingDivergedError, DomainError, FloatingPointError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, ConfigurationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
