#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Transverse normal form of a verified output.

For an output lambda of relative degree r = n - nstar the transversal
coordinates are xi_k = L_f^{k-1} lambda and the last one obeys
xi_r' = a1 + a2 u with a1 = L_f^r lambda and a2 = L_g L_f^{r-1} lambda.
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel

from core.errors import NotSymbolic, PreconditionError
from core.ltflpi import LtflpiChecker
from geometry.lie import lie_derivative
from symbolic.expr import Expr, compile_exprs, to_text

logger = logging.getLogger(__name__)


class TangentialCheck(BaseModel):
    """L_g eta_i at ball samples for the chart's tangential coordinates."""

    coordinates: List[int]
    max_abs: List[float]
    tolerance: float
    annihilated: bool


@dataclass(frozen=True, eq=False)
class NormalForm:
    xi: Tuple[Expr, ...]
    a1: Expr
    a2: Expr
    n: int
    eta_coordinates: Tuple[int, ...] = ()
    tangential_check: Optional[TangentialCheck] = None

    @property
    def r(self):
        return len(self.xi)

    @cached_property
    def _xi(self):
        return compile_exprs(self.xi, self.n)

    @cached_property
    def _drift(self):
        return compile_exprs([self.a1, self.a2], self.n)

    def transverse(self, x):
        """(xi_1, ..., xi_r) at x."""
        return self._xi(x)

    def coefficients(self, x):
        """(a1, a2) at x."""
        return self._drift(x)

    def feedback(self, x, v):
        """u = (-a1 + v) / a2, turning the xi chain into a chain of integrators."""
        a1, a2 = self._drift(x)
        if a2 == 0.0:
            raise PreconditionError(f"a2 vanishes at {np.asarray(x).tolist()}")
        return (-a1 + v) / a2

    def to_dict(self, vars):
        names = tuple(vars)
        result = {
            "r": self.r,
            "xi": [to_text(e, names) for e in self.xi],
            "a1": to_text(self.a1, names),
            "a2": to_text(self.a2, names),
            "eta": {"chart_coordinates": list(self.eta_coordinates)},
        }
        if self.tangential_check is not None:
            result["eta"]["tangential_check"] = self.tangential_check.model_dump(mode="json")
        return result


def normal_form(lam, sys, tset, checker: Optional[LtflpiChecker] = None, chart=None):
    """
    Build the xi chain and the last-row coefficients for lam.

    Args:
        lam: Symbolic output
        sys: Control system
        tset: Target set
        checker: LtflpiChecker used for the relative degree test
        chart: Optional ChartResult; its S_empty and s_tang coordinates become
               the eta recipe and L_g eta is checked on ball samples

    Raises:
        NotSymbolic: lam is not an expression
        PreconditionError: relative degree undefined or different from n - nstar
    """
    if not isinstance(lam, Expr):
        raise NotSymbolic(
            "the normal form needs a symbolic output; use the chart's numeric evaluator instead"
        )
    if checker is None:
        from core.config import default_config

        checker = LtflpiChecker(default_config())

    reldeg = checker.relative_degree(lam, sys, tset.x0)
    r = sys.n - tset.nstar
    if not reldeg.well_defined:
        raise PreconditionError(f"relative degree is undefined at x0: {reldeg.reason}")
    if reldeg.r != r:
        raise PreconditionError(f"relative degree {reldeg.r} differs from n - nstar = {r}")

    xi = tuple(checker.lie_chain(lam, sys, r))
    a1 = lie_derivative(xi[-1], sys.f)
    a2 = lie_derivative(xi[-1], sys.g)

    eta_coordinates = ()
    check = None
    if chart is not None:
        lam_index = chart.chart.lambda_index
        eta_coordinates = tuple(range(lam_index)) + tuple(range(lam_index + r, sys.n))
        check = tangential_check(chart, sys, eta_coordinates, checker.ball_samples(tset.x0)[:8],
                                 checker.config["tolerances"]["numeric_zero"])

    logger.info(f"Normal form built with r={r}, a2(x0)={compile_exprs([a2], sys.n)(tset.x0)[0]:.6g}")
    return NormalForm(xi, a1, a2, sys.n, eta_coordinates, check)


def tangential_check(chart, sys, coordinates, samples, tol):
    """
    |L_g eta_i| on samples, eta_i the chart coordinates listed.

    Reported only; numerically defined eta need not be annihilated by g.
    """
    worst = np.zeros(len(coordinates))
    for x in samples:
        s = chart.inverse(x)
        J = chart.builder.jacobian(chart.chart, s)
        dg = np.linalg.solve(J, sys.g(x))
        worst = np.maximum(worst, np.abs(dg[list(coordinates)]))
    if not coordinates:
        return TangentialCheck(coordinates=[], max_abs=[], tolerance=tol, annihilated=True)
    return TangentialCheck(
        coordinates=list(coordinates),
        max_abs=worst.tolist(),
        tolerance=tol,
        annihilated=bool(np.all(worst < tol)),
    )
