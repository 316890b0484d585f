"""Command-line entry point: ``contextual-rnn <verb> [--config PATH] [--seed N] [--out DIR] [--force]``.

Exit codes: 0 success, 2 configuration error, 3 missing upstream artifact,
4 numeric failure (divergence, eigen-solver failure, no attractor found).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .config import ConfigError, json_schema, load_config
from .fixed_points import AttractorError
from .linear_analysis import EigenError
from .pipeline import STAGES, MissingArtifactError, Run, run_all, run_stage
from .train import TrainingError

EXIT_OK, EXIT_CONFIG, EXIT_MISSING, EXIT_NUMERIC = 0, 2, 3, 4
VERBS = STAGES + ("all", "schema")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="contextual-rnn", description=__doc__.splitlines()[0])
    ap.add_argument("verb", choices=VERBS, help="pipeline stage to run ('all' runs every stage; "
                                                "'schema' prints the config JSON schema)")
    ap.add_argument("--config", default=None, help="JSON config file (defaults apply when omitted)")
    ap.add_argument("--seed", type=int, default=None, help="override the config seed")
    ap.add_argument("--out", default=None, help="override the output directory")
    ap.add_argument("--force", action="store_true", help="re-run even if the manifest says up to date")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.verb == "schema":
        print(json.dumps(json_schema(), indent=1, sort_keys=True))
        return EXIT_OK
    try:
        cfg = load_config(args.config, {"seed": args.seed, "out_dir": args.out})
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    run = Run(cfg)
    try:
        if args.verb == "all":
            ran = run_all(run, args.force)
        else:
            ran = [args.verb] if run_stage(run, args.verb, args.force) else []
    except MissingArtifactError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MISSING
    except (TrainingError, EigenError, AttractorError, FloatingPointError, np.linalg.LinAlgError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as e:
        print(f"error: cannot write outputs: {e}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"{args.verb}: ran {', '.join(ran) if ran else 'nothing (up to date)'} -> {run.root}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
