"""Command-line entry point ``bohmian-hhg``."""
from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import RunConfig, parse_config
from .core import set_threads
from .errors import BohmianHHGError, ConfigurationError
from .pipelines import PIPELINES, StageError, run_pipeline

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="bohmian-hhg",
        description="TDSE, Bohmian and classical-trajectory pipelines for high-harmonic generation.")
    ap.add_argument("pipeline", choices=PIPELINES)
    ap.add_argument("--config", help="file of 'section.key = value' lines (defaults if omitted)")
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--potential", choices=("softcore", "truncated"),
                    help="restrict to one potential variant")
    ap.add_argument("--threads", type=int, default=None,
                    help="FFT worker threads (BHHG_THREADS takes precedence)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def _threads(arg: int | None) -> int:
    env = os.environ.get("BHHG_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigurationError(f"BHHG_THREADS must be an integer, got {env!r}") from None
    else:
        n = 1 if arg is None else arg
    if n < 1:
        raise ConfigurationError(f"thread count must be >= 1, got {n}")
    return n


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        set_threads(_threads(args.threads))
        cfg = parse_config(args.config) if args.config else RunConfig().validate()
        manifest = run_pipeline(cfg, args.pipeline, args.out, args.potential)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        if isinstance(exc.cause, ConfigurationError):
            print(f"configuration error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except BohmianHHGError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(f"{args.pipeline}: wrote {len(manifest['outputs']) + 1} files to {args.out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
