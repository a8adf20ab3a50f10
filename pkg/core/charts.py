#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Construction of the observable transverse output by composing flows.

The chart s -> Phi_s(x0) flows, in order, along the tangential complement
fields v, the top iterate ad^{r-1}_f g, the transversal iterates
ad^{r-2}_f g down to g, and finally the tangential fields w spanning
T Gamma* intersected with inv(G_{r-2} + W). The transverse output is the
s-coordinate of the ad^{r-1}_f g flow, read off by inverting the chart with
Newton's method and checked numerically afterwards.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt

from core.errors import (
    IndependenceFailure,
    NoConvergence,
    PreconditionError,
    VerificationFailure,
)
from core.ltflpi import LtflpiChecker
from core.system_model import tangent_space
from geometry.lie import Distribution, VectorField, ad_iterates
from geometry.subspaces import annihilator, intersect, numeric_rank
from symbolic.diff import jacobian as symbolic_jacobian
from symbolic.expr import Constant
from tools.flows import FlowIntegrator
from tools.newton import central_jacobian, damped_newton
from tools.sampling import ball_samples, halton_ball

logger = logging.getLogger(__name__)

FRAME_MODES = ("projected", "frozen")


# Flow fields

class SymbolicFlowField:
    """An exact symbolic vector field (the ad-iterates)."""

    def __init__(self, vf: VectorField, role: str):
        self.vf = vf
        self.role = role
        self.constant_vector = vf.constant_vector

    def __call__(self, x):
        return self.vf(x)

    def to_dict(self, vars):
        return {"role": self.role, "kind": "symbolic", "components": self.vf.to_text(vars)}


class FrozenFlowField:
    """A vector frozen at x0 and used as a constant field."""

    def __init__(self, vector, role: str):
        self.vector = np.asarray(vector, dtype=float)
        self.role = role
        self.constant_vector = self.vector

    def __call__(self, x):
        return self.vector

    def to_dict(self, vars):
        return {"role": self.role, "kind": "frozen", "vector": self.vector.tolist()}


class ProjectedFlowField:
    """
    A vector frozen at x0, projected at each x onto a moving subspace.

    `subspace` maps x to an orthonormal basis (rows) of the subspace.
    """

    constant_vector = None

    def __init__(self, vector, subspace, role: str):
        self.vector = np.asarray(vector, dtype=float)
        self.subspace = subspace
        self.role = role

    def __call__(self, x):
        q = self.subspace(x)
        return q.T @ (q @ self.vector)

    def to_dict(self, vars):
        return {"role": self.role, "kind": "projected", "vector": self.vector.tolist()}


def _null_rows(matrix, n, tol_rel):
    if matrix.size == 0:
        return np.eye(n)
    rank = numeric_rank(matrix, tol_rel)
    _, _, vt = np.linalg.svd(matrix)
    return vt[rank:]


def aligned_basis(basis):
    """
    Orthonormal basis of span(basis) built from the projected coordinate axes,
    largest projection first, so coordinate subspaces come back as e_k.
    """
    basis = np.atleast_2d(np.asarray(basis, dtype=float))
    m, n = basis.shape
    if m == 0:
        return basis
    projected = list((basis.T @ basis).T)
    chosen = []
    for _ in range(m):
        best, best_norm = None, 0.0
        for v in projected:
            r = v - sum(float(q @ v) * q for q in chosen) if chosen else v
            norm = float(np.linalg.norm(r))
            if norm > best_norm + 1e-12:
                best, best_norm = r, norm
        chosen.append(best / best_norm)
    return np.array(chosen)


def level_set_tangent(tset, tol_rel):
    """x -> orthonormal basis of ker D gamma(x), the tangent space of the level set through x."""
    def subspace(x):
        return _null_rows(tset.constraint_jacobian(x), tset.n, tol_rel)
    return subspace


def level_set_tangent_within(tset, closed: Distribution, tol_rel):
    """x -> orthonormal basis of ker D gamma(x) intersected with closed(x)."""
    def subspace(x):
        vectors = closed.vectors(x)
        ann_closed = _null_rows(vectors, tset.n, tol_rel) if vectors.size else np.eye(tset.n)
        stacked = np.vstack([tset.constraint_jacobian(x), ann_closed])
        return _null_rows(stacked, tset.n, tol_rel)
    return subspace


@dataclass(frozen=True, eq=False)
class FlowChart:
    """
    The n fields of the chart with the order the flows are applied in.

    Parameter layout: s = (S_empty, s_top, s_tran_0..s_tran_{r-2}, s_tang_1..s_tang_mu).
    """

    x0: np.ndarray
    v_fields: Tuple
    w_fields: Tuple
    top_field: SymbolicFlowField
    tran_fields: Tuple
    mu: int
    frame_mode: str

    @property
    def n(self):
        return self.x0.shape[0]

    @property
    def r(self):
        return len(self.tran_fields) + 1

    @property
    def lambda_index(self):
        return len(self.v_fields)

    def parameter_fields(self):
        """Fields in s-layout order."""
        return list(self.v_fields) + [self.top_field] + list(self.tran_fields) + list(self.w_fields)

    def application_order(self, s):
        """(field, time) pairs in the order the flows act on x0."""
        s = np.asarray(s, dtype=float)
        k = len(self.v_fields)
        steps = [(v, s[i]) for i, v in enumerate(self.v_fields)]
        steps.append((self.top_field, s[k]))
        offset = k + 1
        for j in reversed(range(len(self.tran_fields))):
            steps.append((self.tran_fields[j], s[offset + j]))
        offset += len(self.tran_fields)
        steps.extend((w, s[offset + i]) for i, w in enumerate(self.w_fields))
        return steps

    def describe(self, vars):
        return {
            "x0": self.x0.tolist(),
            "mu": self.mu,
            "frame_mode": self.frame_mode,
            "lambda_index": self.lambda_index,
            "fields": [f.to_dict(vars) for f in self.parameter_fields()],
        }


class ChartVerification(BaseModel):
    radius: float
    attempts: int
    sample_count: int
    roundtrip_x: float
    roundtrip_s: float
    transversal_max: float
    top_at_x0: float
    on_set_max: float
    observability_max: float
    passed: bool
    failures: List[str] = Field(default_factory=list)
    tolerances: Dict[str, float]


@dataclass
class ChartResult:
    chart: FlowChart
    builder: "ChartBuilder"
    radius: float
    verification: ChartVerification
    jacobian_x0: np.ndarray = field(repr=False, default=None)

    def forward(self, s):
        return self.builder.forward_map(self.chart, s)

    def inverse(self, x, s0=None):
        return self.builder.invert_chart(self.chart, x, s0=s0, jacobian=self.jacobian_x0)

    def lam(self, x):
        """Transverse output: the top-iterate coordinate of the inverse chart."""
        return float(self.inverse(x)[self.chart.lambda_index])

    def to_dict(self, vars):
        return {
            "chart": self.chart.describe(vars),
            "validity_radius": self.radius,
            "verification": self.verification.model_dump(mode="json"),
        }


class ChartBuilder:
    """
    Builds, inverts and verifies flow charts.
    """

    def __init__(self, config, checker: Optional[LtflpiChecker] = None):
        """
        Initialize the chart builder.

        Args:
            config: Configuration dictionary
            checker: Optional LtflpiChecker to share
        """
        self.config = config
        self.checker = checker or LtflpiChecker(config)
        self.integrator = FlowIntegrator(config)
        charts = config["charts"]
        newton = config["newton"]
        tolerances = config["tolerances"]
        self.frame_mode = charts["frame_mode"]
        if self.frame_mode not in FRAME_MODES:
            raise PreconditionError(f"unknown frame mode {self.frame_mode!r}, expected one of {FRAME_MODES}")
        self.validity_radius = charts["validity_radius"]
        self.max_halvings = charts["max_halvings"]
        self.verify_samples = charts["verify_samples"]
        self.roundtrip_samples = charts["roundtrip_samples"]
        self.gradient_step = charts["gradient_step"]
        self.parameter_bound = charts["parameter_bound"]
        self.newton_iterations = newton["max_iterations"]
        self.newton_tol = newton["tolerance"]
        self.fd_step = newton["fd_step"]
        self.tol_rel = tolerances["rank_rel"]
        self.tol_numeric_zero = tolerances["numeric_zero"]
        self.tol_numeric_nonzero = tolerances["numeric_nonzero"]
        self.tol_on_set = tolerances["zero"]
        self.tol_roundtrip = charts["roundtrip_tolerance"]

        logger.info(
            f"Chart builder initialized in {self.frame_mode} mode, validity radius {self.validity_radius}"
        )

    def build_frames(self, sys, tset, report=None) -> FlowChart:
        """
        Assemble the chart fields at x0.

        Args:
            sys: Control system
            tset: Target set
            report: Optional LtflpiReport already computed for (sys, tset)

        Raises:
            PreconditionError: LTFLPI is not solvable at x0
            IndependenceFailure: the n fields are dependent at x0
        """
        report = report or self.checker.check_ltflpi(sys, tset)
        if not report.solvable:
            raise PreconditionError("LTFLPI is not solvable at x0; no chart to build")

        x0 = tset.x0
        r = sys.n - tset.nstar
        samples = self.checker.set_samples(tset)
        closed, _ = self.checker.closure(sys, tset, samples)

        tangent = tangent_space(tset, x0, self.checker.tol_on_set, self.tol_rel)
        g_tang = intersect(tangent, closed.frame(x0, self.tol_rel))
        w_basis = aligned_basis(g_tang.basis())
        v_basis = aligned_basis(intersect(tangent, annihilator(g_tang)).basis())
        mu = w_basis.shape[0]
        if mu + v_basis.shape[0] != tset.nstar:
            raise IndependenceFailure(
                f"tangent split {v_basis.shape[0]} + {mu} does not match nstar = {tset.nstar}"
            )

        iterates = ad_iterates(sys.f, sys.g, r - 1)
        tran = tuple(SymbolicFlowField(vf, f"ad^{k}_f g") for k, vf in enumerate(iterates[:-1]))
        top = SymbolicFlowField(iterates[-1], f"ad^{r - 1}_f g")

        if self.frame_mode == "frozen":
            v_fields = tuple(FrozenFlowField(v, f"v{i + 1}") for i, v in enumerate(v_basis))
            w_fields = tuple(FrozenFlowField(w, f"w{i + 1}") for i, w in enumerate(w_basis))
        else:
            gamma_constant = all(
                isinstance(e, Constant) for row in symbolic_jacobian(tset.gamma, tset.n) for e in row
            )
            if gamma_constant:
                v_fields = tuple(FrozenFlowField(v, f"v{i + 1}") for i, v in enumerate(v_basis))
            else:
                level = level_set_tangent(tset, self.tol_rel)
                v_fields = tuple(ProjectedFlowField(v, level, f"v{i + 1}") for i, v in enumerate(v_basis))
            within = level_set_tangent_within(tset, closed, self.tol_rel)
            w_fields = tuple(ProjectedFlowField(w, within, f"w{i + 1}") for i, w in enumerate(w_basis))

        chart = FlowChart(x0, v_fields, w_fields, top, tran, mu, self.frame_mode)
        vectors = np.vstack([f(x0) for f in chart.parameter_fields()])
        rank = numeric_rank(vectors, self.tol_rel)
        if rank != sys.n:
            raise IndependenceFailure(f"chart fields have rank {rank} < n = {sys.n} at x0")
        logger.info(f"Chart frames built: mu={mu}, {len(v_fields)} complement fields, r={r}")
        return chart

    def forward_map(self, chart: FlowChart, s):
        """Phi_s(x0)."""
        s = np.asarray(s, dtype=float)
        if s.shape != (chart.n,):
            raise PreconditionError(f"chart parameter must have length {chart.n}")
        x = chart.x0.copy()
        for vf, t in chart.application_order(s):
            x = self.integrator.flow(vf, x, t)
        return x

    def invert_chart(self, chart: FlowChart, x, s0=None, jacobian=None):
        """
        s with Phi_s(x0) = x, by damped Newton from s0 (default 0).

        Raises:
            NoConvergence: Newton failed or left the chart's parameter region
        """
        x = np.asarray(x, dtype=float)
        start = np.zeros(chart.n) if s0 is None else np.asarray(s0, dtype=float)
        result = damped_newton(
            lambda s: self.forward_map(chart, s) - x,
            start,
            tol=self.newton_tol,
            max_iterations=self.newton_iterations,
            fd_step=self.fd_step,
            jacobian=jacobian,
            bound=self.parameter_bound,
        )
        return result.s

    def jacobian(self, chart, s, step=None):
        return central_jacobian(lambda t: self.forward_map(chart, t), s, step or self.gradient_step)

    def lambda_gradient(self, chart, s):
        """d lambda at Phi_s(x0): the lambda row of the inverse chart Jacobian."""
        J = self.jacobian(chart, s)
        e = np.zeros(chart.n)
        e[chart.lambda_index] = 1.0
        return np.linalg.solve(J.T, e)

    def _verify(self, sys, tset, chart, radius, attempt):
        failures = []
        x0 = chart.x0
        J0 = self.jacobian(chart, np.zeros(chart.n), self.fd_step)
        iterates = chart.tran_fields
        top = chart.top_field

        samples = ball_samples(x0, self.verify_samples, radius)
        gradients = []
        roundtrip_x = 0.0
        transversal = 0.0
        for x in samples:
            s = self.invert_chart(chart, x, jacobian=J0)
            roundtrip_x = max(roundtrip_x, float(np.max(np.abs(self.forward_map(chart, s) - x))))
            dl = self.lambda_gradient(chart, s)
            gradients.append(dl)
            for vf in iterates:
                transversal = max(transversal, abs(float(dl @ vf(x))))

        dl0 = self.lambda_gradient(chart, np.zeros(chart.n))
        top_at_x0 = abs(float(dl0 @ top(x0)))

        roundtrip_s = 0.0
        for s in halton_ball(chart.n, self.roundtrip_samples, radius):
            back = self.invert_chart(chart, self.forward_map(chart, s), jacobian=J0)
            roundtrip_s = max(roundtrip_s, float(np.max(np.abs(back - s))))

        on_set = 0.0
        for x in self.checker.set_samples(tset, self.verify_samples, radius):
            s = self.invert_chart(chart, x, jacobian=J0)
            on_set = max(on_set, abs(float(s[chart.lambda_index])))

        observability = self.checker.observability_from_gradients(
            gradients, sys, list(samples), tol=self.tol_numeric_zero
        )

        if roundtrip_x >= self.tol_roundtrip or roundtrip_s >= self.tol_roundtrip:
            failures.append("roundtrip")
        if transversal >= self.tol_numeric_zero:
            failures.append("relative_degree")
        if top_at_x0 <= self.tol_numeric_nonzero:
            failures.append("top_iterate")
        if on_set >= self.tol_on_set:
            failures.append("zero_on_set")
        if not observability.observable:
            failures.append("observability")

        return ChartVerification(
            radius=radius,
            attempts=attempt,
            sample_count=len(samples),
            roundtrip_x=roundtrip_x,
            roundtrip_s=roundtrip_s,
            transversal_max=transversal,
            top_at_x0=top_at_x0,
            on_set_max=on_set,
            observability_max=observability.max_residual,
            passed=not failures,
            failures=failures,
            tolerances={
                "roundtrip": self.tol_roundtrip,
                "numeric_zero": self.tol_numeric_zero,
                "numeric_nonzero": self.tol_numeric_nonzero,
                "on_set": self.tol_on_set,
                "observability": observability.tolerance,
            },
        ), J0

    def extract_lambda(self, sys, tset, chart: Optional[FlowChart] = None) -> ChartResult:
        """
        Build (if needed) and verify the chart, shrinking the ball on failure.

        Raises:
            VerificationFailure: still failing after max_halvings halvings
        """
        chart = chart or self.build_frames(sys, tset)
        retrying = Retrying(
            stop=stop_after_attempt(self.max_halvings + 1),
            retry=retry_if_exception_type((VerificationFailure, NoConvergence)),
            reraise=True,
        )
        for attempt in retrying:
            with attempt:
                number = attempt.retry_state.attempt_number
                radius = self.validity_radius * 0.5 ** (number - 1)
                verification, J0 = self._verify(sys, tset, chart, radius, number)
                if not verification.passed:
                    logger.warning(
                        f"Chart verification failed at radius {radius:.4g}: {verification.failures}"
                    )
                    raise VerificationFailure(
                        ",".join(verification.failures),
                        f"chart checks failed within radius {radius:.4g}",
                    )
        logger.info(f"Transverse output verified on a ball of radius {radius:.4g}")
        return ChartResult(chart, self, radius, verification, J0)

