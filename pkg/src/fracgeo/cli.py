"""``fracgeo run <config> [--out CSV] [--threads N] [--verbose]``.

Exit status: 0 when every checked row passes, 2 when any check fails,
1 on configuration or runtime errors.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import __version__
from .config import ConfigError, load_config
from .experiments import ExperimentError, run
from .grid import ResourceLimitError
from .report import stamp

log = logging.getLogger("fracgeo")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fracgeo", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the experiment described by a config file")
    r.add_argument("config", help="path to a key = value config file")
    r.add_argument("--out", help="CSV destination (default: the config's output key)")
    r.add_argument("--threads", type=int, default=1, help="worker threads across shapes")
    r.add_argument("--verbose", action="store_true", help="log progress and failing rows")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.threads < 1:
        log.error("--threads must be >= 1")
        return 1
    try:
        cfg = load_config(args.config)
        log.info("running %s on %d shape(s)", cfg.experiment.value, len(cfg.shapes))
        report = run(cfg, threads=args.threads)
    except (OSError, ConfigError, ExperimentError, ResourceLimitError, ValueError) as exc:
        log.error("%s", exc)
        return 1
    stamp(report, __version__, cfg.source_lines)
    out = args.out or cfg.output
    try:
        report.write(out)
    except OSError as exc:
        log.error("cannot write %s: %s", out, exc)
        return 1
    for row in report.failures:
        log.warning("FAIL %s %s = %r", row.shape_id, row.quantity, row.value)
    log.info("wrote %d rows to %s", len(report.rows), out)
    return 0 if report.all_passed else 2


if __name__ == "__main__":
    sys.exit(main())
