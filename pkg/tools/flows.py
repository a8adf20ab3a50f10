#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Flows of vector fields.

Integrates x' = v(x) for a signed time with scipy's adaptive Runge-Kutta
solvers. Fields that report a constant value are moved along the exact
straight line instead.
"""

import logging

import numpy as np
from scipy.integrate import solve_ivp

from core.errors import IntegratorBlowup

logger = logging.getLogger(__name__)


class _StepBudget:
    def __init__(self, field, limit):
        self.field = field
        self.limit = limit
        self.calls = 0

    def __call__(self, t, x):
        self.calls += 1
        if self.calls > self.limit:
            raise IntegratorBlowup(f"more than {self.limit} right-hand side evaluations")
        return self.field(x)


class FlowIntegrator:
    """
    Time-t maps of vector fields with fixed tolerances.
    """

    def __init__(self, config):
        """
        Initialize the integrator.

        Args:
            config: Configuration dictionary (uses the integrator section)
        """
        settings = config["integrator"]
        self.method = settings["method"]
        self.rtol = settings["rtol"]
        self.atol = settings["atol"]
        # RK45 spends six evaluations per step
        self.max_evaluations = 6 * int(settings["max_steps"])

    def flow(self, field, x, t):
        """
        phi^field_t(x).

        Args:
            field: Callable x -> dx/dt; a `constant_vector` attribute that is not None
                   marks a constant field
            x: Start point
            t: Signed flow time

        Raises:
            IntegratorBlowup: step-size underflow, evaluation budget exhausted
                              or a non-finite state
        """
        x = np.asarray(x, dtype=float)
        if t == 0.0:
            return x.copy()
        constant = getattr(field, "constant_vector", None)
        if constant is not None:
            return x + t * constant
        sol = solve_ivp(
            _StepBudget(field, self.max_evaluations),
            (0.0, float(t)),
            x,
            method=self.method,
            rtol=self.rtol,
            atol=self.atol,
        )
        if sol.status < 0:
            raise IntegratorBlowup(sol.message)
        end = sol.y[:, -1]
        if not np.all(np.isfinite(end)):
            raise IntegratorBlowup(f"non-finite state after flowing for t = {t}")
        return end
