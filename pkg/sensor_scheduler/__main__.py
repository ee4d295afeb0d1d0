import argparse
import logging
import sys

from . import __version__
from .harness.config import OUTPUT_FORMATS
from .harness.experiments import run
from .harness.utils import error2exitcode

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# subcommand -> experiment kind; None runs the kind named in the config
COMMANDS = {
    "run": None,
    "verify-theorem1": "verify_theorem1",
    "speedup": "speedup_report",
    "curvature": "curvature_study",
    "theorem2": "theorem2_study",
    "network": "network_balance",
}


def _global_flags(parser, default):
    parser.add_argument("--seed", type=int, default=default, help="override the config seed")
    parser.add_argument("--out-dir", dest="out_dir", default=default, help="override the output directory")
    parser.add_argument("--threads", type=int, default=default, help="worker threads")
    parser.add_argument("--format", choices=OUTPUT_FORMATS, default=default, help="metrics file format")
    parser.add_argument("-v", "--verbose", action="store_true", default=default or False, help="debug logging")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sensor_sched",
                                     description="Randomized greedy sensor scheduling experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(parser, None)
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, kind in COMMANDS.items():
        sub = subparsers.add_parser(name, help=f"run the {kind or 'configured'} experiment")
        sub.add_argument("config", help="path to the TOML experiment config")
        # flags may also follow the subcommand without clobbering earlier ones
        _global_flags(sub, argparse.SUPPRESS)
    return parser


@error2exitcode
def _dispatch(args) -> int:
    run(args.config, kind=COMMANDS[args.command], seed=args.seed, output=args.out_dir,
        threads=args.threads, format=args.format)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format=LOG_FORMAT)
    return _dispatch(args)


if __name__ == "__main__":
    sys.exit(main())
