#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Command table, argument parsing and exit codes.

Exit codes: 0 success with a positive verdict, 1 negative verdict,
2 input or usage error, 3 numerical failure.
"""

import argparse
import logging
import sys as _sys
from pathlib import Path
from typing import Optional

from pydantic import BaseModel, Field, ValidationError, field_validator

from cli import handlers
from core.config import apply_overrides, load_config
from core.errors import InputError, NumericalFailure
from core.system_model import load_system_file
from tools.writers import dump_json, envelope, write_json

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_NEGATIVE = 1
EXIT_INPUT = 2
EXIT_NUMERICAL = 3

COMMANDS = {
    "validate": handlers.validate_command,
    "check ltflpi": handlers.check_ltflpi_command,
    "check gtflpi": handlers.check_gtflpi_command,
    "reldeg": handlers.reldeg_command,
    "construct": handlers.construct_command,
    "normalform": handlers.normalform_command,
    "simulate": handlers.simulate_command,
}


class RunConfig(BaseModel):
    """One command-line invocation, validated."""

    command: str
    input: Path
    config_path: Path = Path("config.json")
    tol_rank: Optional[float] = Field(default=None, gt=0)
    tol_zero: Optional[float] = Field(default=None, gt=0)
    samples: Optional[int] = Field(default=None, gt=0)
    radius: Optional[float] = Field(default=None, gt=0)
    frame_mode: Optional[str] = None
    grid: Optional[int] = Field(default=None, gt=0)
    cylinder: bool = False
    chart_radius: Optional[float] = Field(default=None, gt=0)
    lambda_text: Optional[str] = None
    eps: Optional[float] = Field(default=None, gt=0)
    horizon: Optional[float] = Field(default=None, gt=0)
    sat: Optional[float] = Field(default=None, gt=0)
    out: Optional[Path] = None
    json_path: Optional[Path] = None
    pretty: bool = False
    meta: bool = True
    # sampling is always deterministic (Halton points, fixed seed)
    deterministic: bool = True

    @field_validator("input", "out", "json_path", "config_path")
    @classmethod
    def _nonempty_path(cls, path):
        if path is not None and str(path) in ("", "."):
            raise ValueError("paths must not be empty")
        return path

    @field_validator("frame_mode")
    @classmethod
    def _known_frame_mode(cls, mode):
        if mode is not None and mode not in ("projected", "frozen"):
            raise ValueError(f"frame mode must be 'projected' or 'frozen', got {mode!r}")
        return mode

    def configure(self, config):
        """Apply the overrides carried by this run to a loaded configuration."""
        config = apply_overrides(
            config,
            tol_rank=self.tol_rank,
            tol_zero=self.tol_zero,
            samples=self.samples,
            radius=self.radius,
            frame_mode=self.frame_mode,
        )
        if self.grid is not None:
            config["sampling"]["grid_count"] = self.grid
        if self.chart_radius is not None:
            config["charts"]["validity_radius"] = self.chart_radius
        return config


def _common(parser):
    parser.add_argument("input", help="system-definition file")
    parser.add_argument("--json", dest="json_path", help="write the JSON report to this path")
    parser.add_argument("--pretty", action="store_true", help="indent the JSON report")
    parser.add_argument("--no-meta", dest="meta", action="store_false", help="omit timestamp and version")
    parser.add_argument("--config", dest="config_path", default="config.json", help="configuration file")
    parser.add_argument("--tol-rank", type=float, help="relative rank tolerance")
    parser.add_argument("--tol-zero", type=float, help="symbolic-zero tolerance")
    parser.add_argument("--samples", type=int, help="number of samples on the target set and ball")
    parser.add_argument("--radius", type=float, help="sampling radius around x0")
    parser.add_argument("--frame-mode", choices=("projected", "frozen"), help="tangential chart frames")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="tfl",
        description="Transverse feedback linearization with partial information",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    _common(sub.add_parser("validate", help="check the standing assumptions"))

    check = sub.add_parser("check", help="solvability checks")
    check_sub = check.add_subparsers(dest="problem", required=True)
    _common(check_sub.add_parser("ltflpi", help="local problem at x0"))
    gtflpi = check_sub.add_parser("gtflpi", help="sufficient conditions for the global problem")
    _common(gtflpi)
    gtflpi.add_argument("--grid", type=int, help="number of grid points on the target set")
    gtflpi.add_argument("--cylinder", action="store_true", help="attest the generalized-cylinder structure")

    reldeg = sub.add_parser("reldeg", help="verify a candidate output")
    _common(reldeg)
    reldeg.add_argument("--lambda", dest="lambda_text", help="output function over x and y1..yp")

    construct = sub.add_parser("construct", help="build the transverse output from flows")
    _common(construct)
    construct.add_argument("--chart-radius", type=float, help="initial validity radius of the chart")

    normalform = sub.add_parser("normalform", help="transverse normal form of an output")
    _common(normalform)
    normalform.add_argument("--lambda", dest="lambda_text", help="output function over x and y1..yp")

    simulate = sub.add_parser("simulate", help="closed loop with the high-gain observer")
    _common(simulate)
    simulate.add_argument("--lambda", dest="lambda_text", help="output function over x and y1..yp")
    simulate.add_argument("--eps", type=float, help="observer gain parameter")
    simulate.add_argument("--T", dest="horizon", type=float, help="final time")
    simulate.add_argument("--sat", type=float, help="control saturation bound")
    simulate.add_argument("--out", help="trajectory CSV path")
    return parser


def parse_run(argv):
    """argv -> RunConfig. Raises SystemExit(2) on usage errors (argparse)."""
    args = vars(build_parser().parse_args(argv))
    problem = args.pop("problem", None)
    if problem:
        args["command"] = f"{args['command']} {problem}"
    return RunConfig(**{k: v for k, v in args.items() if v is not None})


def _emit(run, outcome, version):
    payload = envelope(run.command, outcome.report, version, meta=run.meta)
    if run.json_path:
        write_json(payload, run.json_path, run.pretty)
    else:
        print(dump_json(payload, run.pretty))


def main(argv=None):
    """
    Run one command.

    Args:
        argv: Argument list without the program name (default sys.argv[1:])

    Returns:
        Exit code
    """
    try:
        run = parse_run(argv)
    except SystemExit as e:
        return EXIT_INPUT if e.code else EXIT_OK
    except ValidationError as e:
        print(f"error: {e}", file=_sys.stderr)
        return EXIT_INPUT

    try:
        config = run.configure(load_config(run.config_path))
        system_file = load_system_file(run.input)
        outcome = COMMANDS[run.command](run, config=config, system_file=system_file)
    except (InputError, OSError, ValueError) as e:
        logger.error(f"{run.command}: {e}")
        print(f"error: {e}", file=_sys.stderr)
        return EXIT_INPUT
    except NumericalFailure as e:
        logger.error(f"{run.command}: numerical failure: {e}")
        print(f"numerical failure: {e}", file=_sys.stderr)
        return EXIT_NUMERICAL

    _emit(run, outcome, config["version"])
    if outcome.failure:
        print(f"numerical failure: {outcome.failure}", file=_sys.stderr)
        return EXIT_NUMERICAL
    if outcome.positive is False:
        return EXIT_NEGATIVE
    return EXIT_OK
