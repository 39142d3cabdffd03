# wavescope/main.py

import argparse
import logging
import os
import sys

from wavescope.core.config import parse_config
from wavescope.core.lab import Lab
from wavescope.util.constants import SUBCOMMANDS, THREADS_ENV_VAR
from wavescope.util.errors import WavescopeError

logger = logging.getLogger("wavescope")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wavescope",
                                     description="Numerical lab for boundary determination from wave data.")
    parser.add_argument("subcommand", nargs="?", choices=SUBCOMMANDS,
                        help="Pipeline to run; must match the configuration when both are given.")
    parser.add_argument("--config", required=True, help="JSON run configuration.")
    parser.add_argument("--out", help="Output directory (overrides the configuration).")
    parser.add_argument("--seed", type=int, help="Seed for perturbation sampling.")
    parser.add_argument("--threads", type=int, help=f"Worker threads (fallback: ${THREADS_ENV_VAR}).")
    parser.add_argument("--resolution-override", type=float, help="Grid spacing h replacing grid.h.")
    parser.add_argument("--log-level", default="INFO", choices=("DEBUG", "INFO", "WARNING", "ERROR"))
    return parser


def main(argv=None) -> int:
    """
    Parses the command line, runs the configured pipeline and returns the
    exit status (0 on success).
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    threads = args.threads
    if threads is None and os.environ.get(THREADS_ENV_VAR):
        threads = int(os.environ[THREADS_ENV_VAR])
    overrides = {"output_dir": args.out, "seed": args.seed, "threads": threads,
                 "resolution": args.resolution_override}
    try:
        config = parse_config(args.config, overrides)
    except WavescopeError as error:
        logger.error("Invalid configuration: [%s] %s %s", error.category, error.message, error.context)
        return 2
    if args.subcommand is not None and args.subcommand != config.subcommand:
        logger.error("Command line asks for '%s' but the configuration is for '%s'.",
                     args.subcommand, config.subcommand)
        return 2

    logger.info("Starting wavescope %s...", config.subcommand)
    status, manifest = Lab(config).dispatch()
    if status == 0:
        logger.info("Done: %d outputs in %s.", len(manifest["outputs"]), config.output_dir)
    else:
        logger.error("Failed with %s.", manifest["error"]["category"])
    return status


if __name__ == "__main__":
    sys.exit(main())
