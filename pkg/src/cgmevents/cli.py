"""Command-line entry point.

Exit status: 0 success, 1 validation error or missing upstream artifact,
2 any other runtime failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
import warnings

from . import config, core, pipeline
from .synth import SynthError

VALIDATION_ERRORS = (config.ConfigError, pipeline.MissingArtifactError, core.IngestError, core.GridError,
                     SynthError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # usage mistakes are validation errors, not runtime failures
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser():
    ap = _Parser(prog="cgmevents", description="Lifestyle events and glucose forecasting pipeline")
    ap.add_argument("subcommand", choices=pipeline.STAGES + ("all",))
    ap.add_argument("--config", required=True, help="YAML configuration file")
    ap.add_argument("--seed", type=int, help="override the configured seed")
    ap.add_argument("--out", help="output directory (overrides the configured one)")
    ap.add_argument("--verbose", action="store_true")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    warnings.showwarning = lambda msg, *_a, **_k: logging.getLogger("cgmevents").warning("%s", msg)
    try:
        cfg = config.load(args.config, {"seed": args.seed, "out": args.out})
        if args.subcommand == "synth" and cfg["inputs"] is not None:
            raise config.ConfigError(["synth: the config names input files; remove `inputs` to synthesise"])
        run = pipeline.Run(cfg)
        if args.subcommand == "all":
            pipeline.run_all(run)
        else:
            pipeline.STAGE_FUNCS[args.subcommand](run)
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - surfaced as exit status 2
        if args.verbose:
            logging.exception("runtime failure")
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
