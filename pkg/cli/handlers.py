#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Command handlers for the tfl command line.

Each handler receives the validated RunConfig and its dependencies as
keyword arguments (config, system_file) and returns a CommandOutcome.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from core.charts import ChartBuilder
from core.errors import NotSymbolic, PreconditionError
from core.ltflpi import LtflpiChecker
from core.normal_form import normal_form
from core.system_model import SystemValidator, parse_output_function
from sim.closed_loop import ClosedLoopSimulator, ObserverConfig
from symbolic.expr import to_text
from tools.writers import write_trajectory_csv

logger = logging.getLogger(__name__)


@dataclass
class CommandOutcome:
    """
    report: JSON-ready dictionary
    positive: verdict (None for commands without one)
    failure: numerical failure that still produced a report (exit 3)
    """

    report: dict
    positive: Optional[bool] = True
    failure: Optional[str] = None


def _output_function(run, system_file):
    """--lambda wins over the file's [lambda] section."""
    text = run.lambda_text or system_file.lambda_text
    if text is None:
        raise NotSymbolic("no output function given; pass --lambda or add a [lambda] section")
    return text, parse_output_function(text, system_file.system)


def _numbers(text, key):
    try:
        return np.array([float(tok) for tok in str(text).replace(",", " ").split()])
    except ValueError:
        raise PreconditionError(f"[controller] {key} must be a list of numbers, got {text!r}")


# Command handlers

def validate_command(run, **kwargs):
    """
    Handle `validate`: regularity and controlled-invariance checks.

    Args:
        run: RunConfig
        **kwargs: config, system_file
    """
    config = kwargs.get("config")
    system_file = kwargs.get("system_file")
    report = SystemValidator(config).validate(system_file.system, system_file.target)
    return CommandOutcome(report.model_dump(mode="json"), report.passed)


def check_ltflpi_command(run, **kwargs):
    """
    Handle `check ltflpi`: conditions (a) and (b) at x0, mu, and the
    commuting-iterates test.
    """
    config = kwargs.get("config")
    system_file = kwargs.get("system_file")
    checker = LtflpiChecker(config)
    sys, tset = system_file.system, system_file.target
    report = checker.check_ltflpi(sys, tset).model_dump(mode="json")
    commuting = checker.check_commuting(sys, tset)
    report["commuting"] = commuting.model_dump(mode="json")
    return CommandOutcome(report, report["solvable"])


def check_gtflpi_command(run, **kwargs):
    """
    Handle `check gtflpi`: sufficient conditions on a grid over Gamma*.
    """
    config = kwargs.get("config")
    system_file = kwargs.get("system_file")
    checker = LtflpiChecker(config)
    report = checker.check_gtflpi(
        system_file.system, system_file.target, cylinder_attested=run.cylinder
    )
    return CommandOutcome(report.model_dump(mode="json"), report.verdict == "sufficient-hold")


def reldeg_command(run, **kwargs):
    """
    Handle `reldeg`: relative degree, zero dynamics and observability of a candidate output.
    """
    config = kwargs.get("config")
    system_file = kwargs.get("system_file")
    text, lam = _output_function(run, system_file)
    checker = LtflpiChecker(config)
    report = checker.check_virtual_output(lam, system_file.system, system_file.target)
    payload = report.model_dump(mode="json")
    payload["lambda"] = text
    return CommandOutcome(payload, report.passed)


def construct_command(run, **kwargs):
    """
    Handle `construct`: build the flow chart and verify the transverse output.
    """
    config = kwargs.get("config")
    system_file = kwargs.get("system_file")
    builder = ChartBuilder(config)
    result = builder.extract_lambda(system_file.system, system_file.target)
    report = result.to_dict(system_file.system.vars)
    return CommandOutcome(report, result.verification.passed)


def normalform_command(run, **kwargs):
    """
    Handle `normalform`: xi chain, a1, a2 of a symbolic output.
    """
    config = kwargs.get("config")
    system_file = kwargs.get("system_file")
    text, lam = _output_function(run, system_file)
    sys, tset = system_file.system, system_file.target
    nf = normal_form(lam, sys, tset, LtflpiChecker(config))
    report = nf.to_dict(sys.vars)
    report["lambda"] = text
    report["a2_at_x0"] = float(nf.coefficients(tset.x0)[1])
    return CommandOutcome(report, True)


def simulate_command(run, **kwargs):
    """
    Handle `simulate`: closed loop with the high-gain observer.

    Observer parameters come from the [observer] section with --eps and
    --sat overriding; initial states and the horizon from [controller].
    """
    config = kwargs.get("config")
    system_file = kwargs.get("system_file")
    sys, tset = system_file.system, system_file.target
    text, lam = _output_function(run, system_file)
    checker = LtflpiChecker(config)
    nf = normal_form(lam, sys, tset, checker)

    obs = ObserverConfig.from_section(
        system_file.observer, nf.r, eps=run.eps, sat=run.sat, defaults=config["observer"]
    )
    controller = system_file.controller
    if "x_init" not in controller:
        raise PreconditionError("[controller] needs x_init")
    x_init = _numbers(controller["x_init"], "x_init")
    xihat_init = _numbers(controller["xihat_init"], "xihat_init") if "xihat_init" in controller else None
    horizon = run.horizon if run.horizon is not None else float(controller.get("t", 20.0))
    out_dt = float(controller["out_dt"]) if "out_dt" in controller else None

    simulator = ClosedLoopSimulator(config)
    trajectory = simulator.simulate(sys, tset, nf.xi, obs, x_init, xihat_init, horizon, out_dt)
    comparison = simulator.simulate_full_information(sys, tset, nf, obs, x_init, horizon, out_dt)
    if run.out:
        write_trajectory_csv(trajectory, run.out, sys.vars)

    report = trajectory.summary().model_dump(mode="json")
    report["lambda"] = text
    report["xi"] = [to_text(e, tuple(sys.vars)) for e in nf.xi]
    report["csv"] = str(run.out) if run.out else None
    report["full_information"] = comparison.summary().model_dump(
        mode="json", include={"final_transverse_norm", "max_transverse_norm", "final_gamma_residual",
                              "saturated_steps", "blowup"},
    )
    return CommandOutcome(report, trajectory.blowup is None, trajectory.blowup)
