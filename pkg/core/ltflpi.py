#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Solvability checks for transverse feedback linearization with partial information.

LtflpiChecker decides whether an observable transverse output exists near
x0 (conditions (a) and (b) plus regularity of the involutive closure),
verifies candidate outputs (relative degree, zero dynamics, observability)
and tests the sufficient conditions of the global problem.
"""

import logging
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field

from core.errors import NumericalFailure, RelativeDegreeUndefined
from core.system_model import set_samples, tangent_space
from geometry.lie import (
    ClosureReport,
    ad_iterates,
    bracket_residual,
    build_G,
    involutive_closure,
    lie_bracket,
    lie_derivative,
    output_kernel_generators,
)
from geometry.subspaces import intersect, is_direct_sum, numeric_rank, span_sum
from symbolic.diff import gradient
from symbolic.expr import Var, compile_exprs
from tools.sampling import ball_samples, random_points

logger = logging.getLogger(__name__)


class ConditionA(BaseModel):
    point: List[float]
    dim_tangent: int
    dim_g: int
    dim_sum: int
    direct: bool
    passed: bool


class ConditionBSample(BaseModel):
    point: List[float]
    dim_with_g: int
    dim_with_closure: int


class ConditionB(BaseModel):
    samples: List[ConditionBSample]
    closure: ClosureReport
    passed: bool


class LtflpiReport(BaseModel):
    """Local solvability verdict with the raw dimensions behind it."""

    n: int
    nstar: int
    transverse_dim: int
    condition_a: Optional[ConditionA] = None
    condition_b: Optional[ConditionB] = None
    regular: bool = False
    mu: Optional[int] = None
    full_information: bool = False
    notes: List[str] = Field(default_factory=list)
    errors: List[str] = Field(default_factory=list)
    solvable: bool
    tolerances: Dict[str, float]


class RelDegReport(BaseModel):
    """Evidence for the relative degree of a candidate output at x0."""

    r: Optional[int]
    rmax: int
    values: List[List[float]]
    value_at_x0: Optional[float]
    well_defined: bool
    reason: str = ""
    sample_count: int
    ball_radius: float
    tolerances: Dict[str, float]


class ZeroDynamicsReport(BaseModel):
    r: int
    max_residual: float
    chain_rank_x0: int
    dims_match: bool
    coincides: bool


class ObservabilityReport(BaseModel):
    max_residual: float
    coefficients: List[List[float]]
    residuals: List[float]
    observable: bool
    tolerance: float


class GtflpiReport(BaseModel):
    """Sufficient conditions for the global problem on a grid; never a proof of unsolvability."""

    grid: List[List[float]]
    cylinder_attested: bool
    condition_a: List[ConditionA]
    condition_a_passed: bool
    g_involutivity_residual: float
    g_ranks: List[int]
    condition_b_passed: bool
    closure: Optional[ClosureReport] = None
    dims: List[ConditionBSample] = Field(default_factory=list)
    condition_c_passed: bool
    verdict: str
    errors: List[str] = Field(default_factory=list)


class BracketWitness(BaseModel):
    i: int
    j: int
    bracket: List[str]
    residual: float


class CommutingReport(BaseModel):
    commuting: bool
    max_residual: float
    witnesses: List[BracketWitness]
    points: int
    tolerance: float


class VirtualOutputReport(BaseModel):
    """Every property a transverse output must have, in one place."""

    on_set_residual: float
    on_set: bool
    relative_degree: RelDegReport
    zero_dynamics: Optional[ZeroDynamicsReport] = None
    observability: ObservabilityReport
    passed: bool


def observability_residuals(gradients, output_jacobians):
    """Least-squares fit of each d lambda against the rows of Dh."""
    coefficients, residuals = [], []
    for dl, dh in zip(gradients, output_jacobians):
        sigma, *_ = np.linalg.lstsq(dh.T, dl, rcond=None)
        residual = np.linalg.norm(dl - dh.T @ sigma) / max(1.0, np.linalg.norm(dl))
        coefficients.append(sigma.tolist())
        residuals.append(float(residual))
    return coefficients, residuals


class LtflpiChecker:
    """
    Decides LTFLPI solvability and verifies transverse outputs.
    """

    def __init__(self, config):
        """
        Initialize the checker.

        Args:
            config: Configuration dictionary
        """
        self.config = config
        tolerances = config["tolerances"]
        sampling = config["sampling"]
        self.tol_rel = tolerances["rank_rel"]
        self.tol_zero = tolerances["zero"]
        self.tol_nonzero = tolerances["nonzero"]
        self.tol_closure = tolerances["closure_residual"]
        self.tol_observability = tolerances["observability"]
        self.tol_commuting = tolerances["commuting"]
        self.tol_on_set = tolerances["on_set"]
        self.tol_projection = tolerances["projection"]
        self.set_radius = sampling["set_radius"]
        self.set_count = sampling["set_count"]
        self.ball_radius = sampling["ball_radius"]
        self.ball_count = sampling["ball_count"]
        self.grid_radius = sampling["grid_radius"]
        self.grid_count = sampling["grid_count"]
        self.random_count = sampling["random_points"]
        self.random_radius = sampling["random_radius"]
        self.seed = sampling["seed"]
        self.projection = config["projection"]
        self.max_sweeps = config.get("closure", {}).get("max_sweeps")

        logger.info(
            f"LTFLPI checker initialized with rank_rel={self.tol_rel}, zero={self.tol_zero}, "
            f"{self.set_count} set samples of radius {self.set_radius}"
        )

    def tolerances(self):
        return {
            "rank_rel": self.tol_rel,
            "zero": self.tol_zero,
            "nonzero": self.tol_nonzero,
            "closure_residual": self.tol_closure,
            "observability": self.tol_observability,
            "set_radius": self.set_radius,
            "ball_radius": self.ball_radius,
        }

    def set_samples(self, tset, count=None, radius=None):
        return set_samples(
            tset,
            count or self.set_count,
            radius or self.set_radius,
            self.tol_projection,
            self.projection["max_iterations"],
            self.projection["max_retries"],
        )

    def ball_samples(self, x0):
        return list(ball_samples(x0, self.ball_count, self.ball_radius))

    # Conditions (a) and (b)

    def _condition_a_at(self, sys, tset, x, G):
        tangent = tangent_space(tset, x, self.tol_on_set, self.tol_rel)
        g_frame = G.frame(x, self.tol_rel)
        total = span_sum(tangent, g_frame)
        direct = is_direct_sum(tangent, g_frame)
        return ConditionA(
            point=np.asarray(x).tolist(),
            dim_tangent=tangent.rank,
            dim_g=g_frame.rank,
            dim_sum=total.rank,
            direct=direct,
            passed=direct and total.rank == sys.n,
        )

    def check_condition_a(self, sys, tset) -> ConditionA:
        """T_x0 Gamma* (+) G_{r-1}(x0) = R^n with r = n - nstar."""
        r = sys.n - tset.nstar
        result = self._condition_a_at(sys, tset, tset.x0, build_G(sys, r - 1))
        logger.info(
            f"Condition (a): dims {result.dim_tangent} + {result.dim_g} -> {result.dim_sum}, "
            f"{'pass' if result.passed else 'fail'}"
        )
        return result

    def closure(self, sys, tset, samples):
        """inv(G_{r-2} + W) over the given samples."""
        r = sys.n - tset.nstar
        kernel = output_kernel_generators(sys)
        return involutive_closure(
            build_G(sys, r - 2), kernel.distribution, samples,
            tol_rel=self.tol_rel, max_sweeps=self.max_sweeps, w_method=kernel.method,
        )

    def _dims_at(self, tset, x, G, closed):
        tangent = tangent_space(tset, x, self.tol_on_set, self.tol_rel)
        return ConditionBSample(
            point=np.asarray(x).tolist(),
            dim_with_g=span_sum(tangent, G.frame(x, self.tol_rel)).rank,
            dim_with_closure=span_sum(tangent, closed.frame(x, self.tol_rel)).rank,
        )

    def check_condition_b(self, sys, tset, samples, closure=None) -> ConditionB:
        """dim(T Gamma* (+) G_{r-2}) = dim(T Gamma* + inv(G_{r-2} + W)) at every sample."""
        r = sys.n - tset.nstar
        G = build_G(sys, r - 2)
        closed, report = closure if closure is not None else self.closure(sys, tset, samples)
        dims = [self._dims_at(tset, x, G, closed) for x in samples]
        passed = all(d.dim_with_g == d.dim_with_closure for d in dims)
        logger.info(
            f"Condition (b): {sum(d.dim_with_g == d.dim_with_closure for d in dims)}/{len(dims)} "
            f"samples with equal dimensions"
        )
        return ConditionB(samples=dims, closure=report, passed=passed)

    def tangential_dimension(self, tset, closed):
        """
        mu = dim(T_x0 Gamma* intersected with inv(G_{r-2} + W)(x0)).

        Args:
            tset: Target set
            closed: Involutive closure of G_{r-2} + W

        Returns:
            mu as an int
        """
        tangent = tangent_space(tset, tset.x0, self.tol_on_set, self.tol_rel)
        return intersect(tangent, closed.frame(tset.x0, self.tol_rel)).rank

    def check_ltflpi(self, sys, tset) -> LtflpiReport:
        """
        Local solvability at x0: condition (a), condition (b) with the closure
        decided on target-set samples, regularity and mu.

        Args:
            sys: Control system
            tset: Target set with its base point x0

        Returns:
            LtflpiReport; failures to evaluate a condition land in errors and
            leave solvable False
        """
        r = sys.n - tset.nstar
        report = LtflpiReport(
            n=sys.n,
            nstar=tset.nstar,
            transverse_dim=r,
            solvable=False,
            tolerances=self.tolerances(),
        )
        full_information = sys.p == sys.n and all(h == Var(i) for i, h in enumerate(sys.h))
        if full_information:
            report.full_information = True
            report.notes.append("h is the identity: W = {0} and the conditions are those of exact feedback linearization")

        try:
            report.condition_a = self.check_condition_a(sys, tset)
        except NumericalFailure as e:
            logger.error(f"Condition (a) could not be evaluated: {e}")
            report.errors.append(f"condition_a: {e}")

        try:
            samples = self.set_samples(tset)
            closed, closure_report = self.closure(sys, tset, samples)
            report.condition_b = self.check_condition_b(sys, tset, samples, (closed, closure_report))
            report.regular = closure_report.regular and closure_report.converged
            report.mu = self.tangential_dimension(tset, closed)
            if closure_report.w_method == "frozen":
                report.notes.append("W entered the closure as per-sample frozen frames")
        except NumericalFailure as e:
            logger.error(f"Condition (b) could not be evaluated: {e}")
            report.errors.append(f"condition_b: {e}")

        report.notes.append(
            "condition (b) and regularity are verified on the sampled points only"
        )
        report.solvable = bool(
            report.condition_a is not None and report.condition_a.passed
            and report.condition_b is not None and report.condition_b.passed
            and report.regular
        )
        logger.info(f"LTFLPI {'solvable' if report.solvable else 'not solvable'} at x0 = {tset.x0.tolist()}")
        return report

    # Candidate outputs

    def relative_degree(self, lam, sys, x0, rmax=None, samples=None, strict=False) -> RelDegReport:
        """
        Relative degree of lam at x0, with vanishing checked on a full ball.

        Args:
            lam: Candidate output expression
            sys: Control system
            x0: Base point
            rmax: Largest degree tried, default n
            samples: Points of a full-dimensional ball around x0
            strict: Raise RelativeDegreeUndefined instead of returning the report

        Returns:
            RelDegReport
        """
        x0 = np.asarray(x0, dtype=float)
        if rmax is None:
            rmax = sys.n
        samples = samples if samples is not None else self.ball_samples(x0)
        chain = [lam]
        terms = []
        values = []
        r = None
        value_at_x0 = None
        for k in range(rmax):
            if k > 0:
                chain.append(lie_derivative(chain[-1], sys.f))
            term = lie_derivative(chain[k], sys.g)
            terms.append(term)
            evaluator = compile_exprs([term], sys.n)
            values.append([float(evaluator(x)[0]) for x in samples])
            at_x0 = float(evaluator(x0)[0])
            if abs(at_x0) > self.tol_nonzero:
                r = k + 1
                value_at_x0 = at_x0
                break

        reason = ""
        if r is None:
            reason = f"L_g L_f^k lambda vanishes at x0 for every k < {rmax}"
        else:
            for k in range(r - 1):
                worst = max(abs(v) for v in values[k])
                if worst >= self.tol_zero:
                    reason = f"L_g L_f^{k} lambda vanishes at x0 but reaches {worst:.3e} on the ball"
                    break
        well_defined = r is not None and not reason

        report = RelDegReport(
            r=r,
            rmax=rmax,
            values=values,
            value_at_x0=value_at_x0,
            well_defined=well_defined,
            reason=reason,
            sample_count=len(samples),
            ball_radius=self.ball_radius,
            tolerances={"zero": self.tol_zero, "nonzero": self.tol_nonzero},
        )
        logger.info(f"Relative degree: r={r}, well_defined={well_defined} {reason}")
        if strict and not well_defined:
            raise RelativeDegreeUndefined(reason, report)
        return report

    @staticmethod
    def lie_chain(lam, sys, r):
        """[lam, L_f lam, ..., L_f^{r-1} lam]."""
        chain = [lam]
        for _ in range(r - 1):
            chain.append(lie_derivative(chain[-1], sys.f))
        return chain

    def zero_dynamics_coincidence(self, lam, r, sys, tset, samples) -> ZeroDynamicsReport:
        """
        Does lam = L_f lam = ... = L_f^{r-1} lam = 0 cut out Gamma* near x0?

        Args:
            lam: Candidate output expression
            r: Its relative degree
            sys: Control system
            tset: Target set
            samples: Points on Gamma* where the chain must vanish

        Returns:
            ZeroDynamicsReport; coincides needs the chain below the zero
            tolerance on samples and a chain of rank r at x0 with n - r = nstar
        """
        chain = self.lie_chain(lam, sys, r)
        evaluator = compile_exprs(chain, sys.n)
        worst = max(float(np.max(np.abs(evaluator(x)))) for x in samples)
        jac_rows = [compile_exprs(gradient(c, sys.n), sys.n)(tset.x0) for c in chain]
        chain_rank = numeric_rank(np.array(jac_rows), self.tol_rel)
        dims_match = sys.n - r == tset.nstar and chain_rank == r
        coincides = worst < self.tol_zero and dims_match
        logger.info(
            f"Zero dynamics: residual {worst:.3e}, zero-set dimension {sys.n - chain_rank} vs nstar {tset.nstar}"
        )
        return ZeroDynamicsReport(
            r=r,
            max_residual=worst,
            chain_rank_x0=chain_rank,
            dims_match=dims_match,
            coincides=coincides,
        )

    def observability_factorization(self, lam, sys, samples) -> ObservabilityReport:
        """d lambda = sum_i sigma_i dh_i, least squares at every sample."""
        grad = compile_exprs(gradient(lam, sys.n), sys.n)
        gradients = [grad(x) for x in samples]
        return self.observability_from_gradients(gradients, sys, samples)

    def observability_from_gradients(self, gradients, sys, samples, tol=None) -> ObservabilityReport:
        """
        Least-squares fit of each gradient against the rows of dh at its sample.

        Args:
            gradients: d lambda at each sample, symbolic or numeric
            sys: Control system
            samples: Points matching gradients one to one
            tol: Largest accepted residual, default the observability tolerance

        Returns:
            ObservabilityReport with the per-sample coefficients and residuals
        """
        if tol is None:
            tol = self.tol_observability
        jacobians = [sys.output_jacobian(x) for x in samples]
        coefficients, residuals = observability_residuals(gradients, jacobians)
        worst = max(residuals) if residuals else 0.0
        return ObservabilityReport(
            max_residual=worst,
            coefficients=coefficients,
            residuals=residuals,
            observable=worst < tol,
            tolerance=tol,
        )

    def check_virtual_output(self, lam, sys, tset) -> VirtualOutputReport:
        """Gamma* in lam^-1(0), relative degree n - nstar, zero dynamics and observability."""
        set_points = self.set_samples(tset)
        evaluator = compile_exprs([lam], sys.n)
        on_set_residual = max(abs(float(evaluator(x)[0])) for x in set_points)

        reldeg = self.relative_degree(lam, sys, tset.x0)
        zero_dynamics = None
        if reldeg.well_defined:
            zero_dynamics = self.zero_dynamics_coincidence(lam, reldeg.r, sys, tset, set_points)
        ball = self.ball_samples(tset.x0)
        observability = self.observability_factorization(lam, sys, ball)

        passed = (
            on_set_residual < self.tol_zero
            and reldeg.well_defined
            and reldeg.r == sys.n - tset.nstar
            and zero_dynamics is not None and zero_dynamics.coincides
            and observability.observable
        )
        return VirtualOutputReport(
            on_set_residual=on_set_residual,
            on_set=on_set_residual < self.tol_zero,
            relative_degree=reldeg,
            zero_dynamics=zero_dynamics,
            observability=observability,
            passed=passed,
        )

    # Global problem

    def check_gtflpi(self, sys, tset, grid=None, cylinder_attested=False) -> GtflpiReport:
        """
        Grid check of the sufficient conditions (a)-(c) for the global problem.

        Args:
            sys: Control system
            tset: Target set
            grid: Points on Gamma*, default a Halton grid of grid_count points
            cylinder_attested: The user's statement that Gamma* is a generalized cylinder
        """
        r = sys.n - tset.nstar
        errors = []
        grid = [np.asarray(x, dtype=float) for x in grid] if grid is not None else self.set_samples(
            tset, self.grid_count, self.grid_radius
        )
        G_top = build_G(sys, r - 1)
        G = build_G(sys, r - 2)

        cond_a = []
        for x in grid:
            try:
                cond_a.append(self._condition_a_at(sys, tset, x, G_top))
            except NumericalFailure as e:
                errors.append(f"condition_a at {x.tolist()}: {e}")
        a_passed = not errors and all(c.passed for c in cond_a)

        off_set = self.ball_samples(tset.x0)
        checked = list(grid) + off_set
        residual = bracket_residual(G, checked, self.tol_rel)
        g_ranks = [G.frame(x, self.tol_rel).rank for x in checked]
        b_passed = residual < self.tol_closure and len(set(g_ranks)) == 1

        closure_report = None
        dims = []
        c_passed = False
        try:
            closed, closure_report = self.closure(sys, tset, grid)
            dims = [self._dims_at(tset, x, G, closed) for x in grid]
            c_passed = (
                closure_report.regular and closure_report.converged
                and all(d.dim_with_g == d.dim_with_closure for d in dims)
            )
        except NumericalFailure as e:
            errors.append(f"condition_c: {e}")

        hold = a_passed and b_passed and c_passed
        if not cylinder_attested:
            logger.warning("Generalized-cylinder structure of the target set not attested")
        logger.info(f"GTFLPI sufficient conditions {'hold' if hold else 'fail'} on {len(grid)} grid points")
        return GtflpiReport(
            grid=[x.tolist() for x in grid],
            cylinder_attested=cylinder_attested,
            condition_a=cond_a,
            condition_a_passed=a_passed,
            g_involutivity_residual=residual,
            g_ranks=g_ranks,
            condition_b_passed=b_passed,
            closure=closure_report,
            dims=dims,
            condition_c_passed=c_passed,
            verdict="sufficient-hold" if hold else "sufficient-fail",
            errors=errors,
        )

    def check_commuting(self, sys, tset=None, points=None) -> CommutingReport:
        """Do the brackets [ad^i_f g, ad^j_f g], 0 <= i < j <= r-1, vanish?"""
        nstar = tset.nstar if tset is not None else 0
        r = sys.n - nstar
        if points is None:
            center = tset.x0 if tset is not None else np.zeros(sys.n)
            points = random_points(center, self.random_count, self.random_radius, self.seed)
        fields = ad_iterates(sys.f, sys.g, r - 1)
        names = tuple(sys.vars)
        witnesses = []
        worst = 0.0
        for i in range(len(fields)):
            for j in range(i + 1, len(fields)):
                bracket = lie_bracket(fields[i], fields[j])
                residual = 0.0 if bracket.is_zero() else max(
                    float(np.max(np.abs(bracket(x)))) for x in points
                )
                worst = max(worst, residual)
                witnesses.append(BracketWitness(i=i, j=j, bracket=bracket.to_text(names), residual=residual))
        return CommutingReport(
            commuting=worst < self.tol_commuting,
            max_residual=worst,
            witnesses=witnesses,
            points=len(points),
            tolerance=self.tol_commuting,
        )
