#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Control system, output and target set.

Holds the single-input control-affine system x' = f(x) + g(x)u with output
y = h(x), the target set as the zero set of gamma, the loader for the
line-oriented system-definition format, and the regularity checks that
every later stage relies on.
"""

import logging
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt

from core.errors import (
    DimensionMismatch,
    FormatError,
    InputError,
    NoConvergence,
    NotOnSet,
    RankDrop,
)
from geometry.lie import VectorField, jacobian_matrix
from geometry.subspaces import Frame, numeric_rank
from symbolic.expr import Expr, Var, VarTable, ZERO, compile_exprs, simplify, substitute
from symbolic.parser import parse, parse_constant
from tools.sampling import ball_samples, halton_ball

logger = logging.getLogger(__name__)

SECTIONS = ("vars", "f", "g", "h", "gamma", "nstar", "x0", "lambda", "observer", "controller")
_EXPR_SECTIONS = ("f", "g", "h", "gamma")
_KEYED_SECTIONS = ("observer", "controller")
_HEADER_RE = re.compile(r"^\[(?P<name>[A-Za-z_][A-Za-z_0-9]*)\]\s*(?P<rest>.*)$")


@dataclass(frozen=True, eq=False)
class ControlSystem:
    """x' = f(x) + g(x) u, y = h(x)."""

    vars: VarTable
    f: VectorField
    g: VectorField
    h: Tuple[Expr, ...]

    def __post_init__(self):
        n = len(self.vars)
        object.__setattr__(self, "h", tuple(simplify(e) for e in self.h))
        if self.f.n != n or self.g.n != n:
            raise DimensionMismatch(f"|f| = {self.f.n}, |g| = {self.g.n}, expected n = {n}")
        if not 1 <= len(self.h) <= n:
            raise DimensionMismatch(f"output dimension p = {len(self.h)} must satisfy 1 <= p <= n = {n}")

    @property
    def n(self):
        return len(self.vars)

    @property
    def p(self):
        return len(self.h)

    @cached_property
    def _output(self):
        return compile_exprs(self.h, self.n)

    @cached_property
    def _output_jacobian(self):
        return jacobian_matrix(self.h, self.n)

    def output(self, x):
        return self._output(x)

    def output_jacobian(self, x):
        return self._output_jacobian(x)

    def with_feedback(self, alpha: Expr):
        """The system with drift f + g*alpha."""
        return ControlSystem(self.vars, self.f + self.g.scaled(alpha), self.g, self.h)


@dataclass(frozen=True, eq=False)
class TargetSet:
    """Gamma* = gamma^-1(0) of dimension nstar, with base point x0 on it."""

    gamma: Tuple[Expr, ...]
    nstar: int
    x0: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "gamma", tuple(simplify(e) for e in self.gamma))
        x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        object.__setattr__(self, "x0", x0)
        n = x0.shape[0]
        if not 0 < self.nstar < n:
            raise DimensionMismatch(f"nstar = {self.nstar} must satisfy 0 < nstar < n = {n}")
        if len(self.gamma) != n - self.nstar:
            raise DimensionMismatch(
                f"gamma has {len(self.gamma)} rows but n - nstar = {n - self.nstar}"
            )

    @property
    def n(self):
        return self.x0.shape[0]

    @property
    def codim(self):
        return self.n - self.nstar

    @cached_property
    def _constraint(self):
        return compile_exprs(self.gamma, self.n)

    @cached_property
    def _constraint_jacobian(self):
        return jacobian_matrix(self.gamma, self.n)

    def constraint(self, x):
        return self._constraint(x)

    def constraint_jacobian(self, x):
        return self._constraint_jacobian(x)

    def residual(self, x):
        return float(np.max(np.abs(self.constraint(x))))


@dataclass(frozen=True)
class SystemFile:
    """Everything a system-definition file carries."""

    system: ControlSystem
    target: TargetSet
    lambda_text: Optional[str] = None
    observer: Dict[str, str] = field(default_factory=dict)
    controller: Dict[str, str] = field(default_factory=dict)

    def output_function(self):
        """The [lambda] entry parsed as an expression over x, or None."""
        if self.lambda_text is None:
            return None
        return parse_output_function(self.lambda_text, self.system)


def output_names(p):
    return tuple(f"y{i + 1}" for i in range(p))


def parse_output_function(text, system):
    """
    Parse an output function written over y1..yp and/or the state variables.

    Output names are replaced by the corresponding h_i, so the result is an
    expression over the state variables only.
    """
    names = tuple(system.vars)
    extra = tuple(y for y in output_names(system.p) if y not in names)
    table = VarTable(names + extra)
    e = parse(text, table)
    mapping = {}
    for y in extra:
        mapping[table.index(y)] = system.h[int(y[1:]) - 1]
    return substitute(e, mapping)


# Loading

@dataclass
class _Section:
    name: str
    line: int
    entries: List[Tuple[int, str]] = field(default_factory=list)


def _strip_comment(line):
    return line.split("#", 1)[0].strip()


def _split_sections(file_text):
    sections: Dict[str, _Section] = {}
    current = None
    for lineno, raw in enumerate(file_text.splitlines(), start=1):
        line = _strip_comment(raw)
        if not line:
            continue
        header = _HEADER_RE.match(line)
        if header:
            name = header.group("name").lower()
            if name not in SECTIONS:
                raise FormatError(lineno, f"unknown section [{name}]")
            if name in sections:
                raise FormatError(lineno, f"duplicate section [{name}]")
            current = _Section(name, lineno)
            sections[name] = current
            rest = header.group("rest").strip()
            if rest:
                current.entries.append((lineno, rest))
            continue
        if line.startswith("["):
            raise FormatError(lineno, f"malformed section header {line!r}")
        if current is None:
            raise FormatError(lineno, "content before the first section header")
        current.entries.append((lineno, line))
    return sections


def _require(sections, name):
    if name not in sections:
        raise FormatError(0, f"missing section [{name}]")
    section = sections[name]
    if not section.entries and name not in _KEYED_SECTIONS:
        raise FormatError(section.line, f"section [{name}] is empty")
    return section


def _parse_exprs(section, vars):
    exprs = []
    for lineno, text in section.entries:
        try:
            exprs.append(parse(text, vars))
        except InputError:
            logger.error(f"Could not parse [{section.name}] entry on line {lineno}: {text!r}")
            raise
    return tuple(exprs)


def _parse_numbers(section, vars):
    tokens = [(lineno, tok) for lineno, text in section.entries for tok in text.split()]
    values = []
    for lineno, tok in tokens:
        try:
            values.append(parse_constant(tok, vars))
        except InputError as e:
            raise FormatError(lineno, f"expected a number in [{section.name}], got {tok!r} ({e})")
    return values


def _parse_keyed(section):
    pairs = {}
    for lineno, text in section.entries:
        if "=" not in text:
            raise FormatError(lineno, f"expected 'key = value' in [{section.name}], got {text!r}")
        key, value = (part.strip() for part in text.split("=", 1))
        if not key:
            raise FormatError(lineno, f"empty key in [{section.name}]")
        pairs[key.lower()] = value
    return pairs


def load_system(file_text: str) -> SystemFile:
    """
    Load a system-definition file.

    Args:
        file_text: File contents

    Returns:
        SystemFile with the parsed system, target set and optional sections

    Raises:
        FormatError: structural problems, with the offending line
        DimensionMismatch: inconsistent section sizes
        ExprSyntaxError, UnknownVariable: bad expressions
    """
    sections = _split_sections(file_text)

    vars_section = _require(sections, "vars")
    names = tuple(tok for _, text in vars_section.entries for tok in text.split())
    try:
        vars = VarTable(names)
    except InputError as e:
        raise FormatError(vars_section.line, str(e))
    for name in names:
        if not re.fullmatch(r"[A-Za-z_][A-Za-z_0-9]*", name) or name in ("sin", "cos", "exp"):
            raise FormatError(vars_section.line, f"invalid variable name {name!r}")
    n = len(vars)

    exprs = {name: _parse_exprs(_require(sections, name), vars) for name in _EXPR_SECTIONS}
    for name in ("f", "g"):
        if len(exprs[name]) != n:
            raise DimensionMismatch(f"[{name}] has {len(exprs[name])} entries, expected n = {n}")

    nstar_section = _require(sections, "nstar")
    nstar_values = _parse_numbers(nstar_section, vars)
    if len(nstar_values) != 1 or nstar_values[0] != int(nstar_values[0]):
        raise FormatError(nstar_section.line, "[nstar] must be a single integer")
    nstar = int(nstar_values[0])

    x0_section = _require(sections, "x0")
    x0 = _parse_numbers(x0_section, vars)
    if len(x0) != n:
        raise DimensionMismatch(f"[x0] has {len(x0)} entries, expected n = {n}")

    system = ControlSystem(vars, VectorField(exprs["f"]), VectorField(exprs["g"]), exprs["h"])
    target = TargetSet(exprs["gamma"], nstar, np.array(x0))

    lambda_text = None
    if "lambda" in sections:
        lambda_section = sections["lambda"]
        if len(lambda_section.entries) != 1:
            raise FormatError(lambda_section.line, "[lambda] must hold exactly one expression")
        lambda_text = lambda_section.entries[0][1]
        parse_output_function(lambda_text, system)

    observer = _parse_keyed(sections["observer"]) if "observer" in sections else {}
    controller = _parse_keyed(sections["controller"]) if "controller" in sections else {}

    logger.info(f"Loaded system with n={n}, p={system.p}, nstar={nstar}")
    return SystemFile(system, target, lambda_text, observer, controller)


def load_system_file(path):
    with open(path, "r", encoding="utf-8") as system_file:
        return load_system(system_file.read())


def augment_with_exosystem(vars, f, g, s, n_x):
    """
    Plant driven by an unmeasured exosystem w' = s(w).

    The state is q = (x, w), F = (f, s), G = (g, 0) and the output is the
    plant state H(q) = x, so W is spanned by the exosystem coordinates.
    """
    f, g, s = tuple(f), tuple(g), tuple(s)
    if len(f) != n_x or len(g) != n_x:
        raise DimensionMismatch(f"plant fields must have n_x = {n_x} entries")
    if len(vars) != n_x + len(s):
        raise DimensionMismatch(f"{len(vars)} variables for {n_x} plant and {len(s)} exosystem states")
    F = VectorField(f + s)
    G = VectorField(g + (ZERO,) * len(s))
    H = tuple(Var(i) for i in range(n_x))
    return ControlSystem(vars if isinstance(vars, VarTable) else VarTable(tuple(vars)), F, G, H)


# Pointwise geometry of the target set

def tangent_space(tset: TargetSet, x, tol_on_set=1e-7, tol_rel=1e-8) -> Frame:
    """
    Orthonormal frame of ker(D gamma_x) at a point of Gamma*.

    Raises:
        NotOnSet: |gamma(x)| exceeds tol_on_set
        RankDrop: the kernel does not have dimension nstar
    """
    x = np.asarray(x, dtype=float)
    residual = tset.residual(x)
    if residual > tol_on_set:
        raise NotOnSet(f"|gamma(x)| = {residual:.3e} > {tol_on_set:.1e} at {x.tolist()}")
    dgamma = tset.constraint_jacobian(x)
    rank = numeric_rank(dgamma, tol_rel)
    if tset.n - rank != tset.nstar:
        raise RankDrop(f"ker(D gamma) has dimension {tset.n - rank}, expected nstar = {tset.nstar}")
    _, _, vt = np.linalg.svd(dgamma)
    return Frame(x, vt[tset.n - tset.nstar:], tol_rel)


def _field_values(v, x):
    if callable(v):
        return np.asarray(v(x), dtype=float)
    return np.asarray(v, dtype=float)


def invariance_check(v, tset: TargetSet, samples, tol_on_set=1e-7):
    """max over samples of max_i |<D gamma_i(x), v(x)>|."""
    worst = 0.0
    for x in samples:
        x = np.asarray(x, dtype=float)
        residual = tset.residual(x)
        if residual > tol_on_set:
            raise NotOnSet(f"sample {x.tolist()} is off the target set (|gamma| = {residual:.3e})")
        value = tset.constraint_jacobian(x) @ _field_values(v, x)
        worst = max(worst, float(np.max(np.abs(value))) if value.size else 0.0)
    return worst


def project_to_set(tset: TargetSet, x_guess, tol=1e-10, max_iterations=50):
    """
    Gauss-Newton projection of x_guess onto gamma(x) = 0.

    Raises:
        NoConvergence: tolerance not met within max_iterations
    """
    x = np.array(x_guess, dtype=float)
    for iteration in range(max_iterations + 1):
        value = tset.constraint(x)
        if not np.all(np.isfinite(value)):
            raise NoConvergence(f"projection diverged after {iteration} iterations")
        if np.max(np.abs(value)) <= tol:
            return x
        if iteration == max_iterations:
            break
        step, *_ = np.linalg.lstsq(tset.constraint_jacobian(x), value, rcond=None)
        x = x - step
    raise NoConvergence(f"projection did not reach |gamma| <= {tol:.1e} in {max_iterations} iterations")


def set_samples(tset: TargetSet, count, radius, tol=1e-10, max_iterations=50, max_retries=4):
    """
    Deterministic samples of Gamma* near x0, x0 first.

    Halton offsets of the given radius in T_{x0}Gamma* are projected back
    onto the set; an offset whose projection fails is retried at half size.
    """
    basis = tangent_space(tset, tset.x0).vectors
    offsets = halton_ball(tset.nstar, count, radius) @ basis
    samples = []
    for offset in offsets:
        for attempt in Retrying(stop=stop_after_attempt(max_retries),
                                retry=retry_if_exception_type(NoConvergence), reraise=True):
            with attempt:
                scale = 0.5 ** (attempt.retry_state.attempt_number - 1)
                if scale < 1.0:
                    logger.warning(f"Projection failed, retrying offset at scale {scale}")
                samples.append(project_to_set(tset, tset.x0 + scale * offset, tol, max_iterations))
    return samples


# Validation

class SampleCheck(BaseModel):
    point: List[float]
    value: float


class ValidationReport(BaseModel):
    """Regularity and standing-assumption checks for a loaded system."""

    n: int
    p: int
    nstar: int
    dh_rank_x0: int
    dh_ranks: List[int]
    dh_rank_pass: bool
    gamma_residual_x0: float
    base_point_pass: bool
    regular_value_ratios: List[float]
    regular_value_pass: bool
    controlled_invariance: List[SampleCheck] = Field(default_factory=list)
    controlled_invariance_pass: bool
    set_sampling_error: Optional[str] = None
    passed: bool
    tolerances: Dict[str, float]


class SystemValidator:
    """
    Checks the standing assumptions on (system, target set).
    """

    def __init__(self, config):
        """
        Initialize the validator.

        Args:
            config: Configuration dictionary
        """
        self.config = config
        tolerances = config["tolerances"]
        sampling = config["sampling"]
        self.tol_rel = tolerances["rank_rel"]
        self.tol_zero = tolerances["zero"]
        self.tol_base = tolerances["base_point"]
        self.ball_radius = sampling["validate_radius"]
        self.ball_count = sampling["validate_count"]
        self.projection = config["projection"]
        self.tol_projection = tolerances["projection"]

        logger.info(
            f"System validator initialized with rank_rel={self.tol_rel}, "
            f"{self.ball_count} samples of radius {self.ball_radius}"
        )

    def validate(self, system: ControlSystem, tset: TargetSet) -> ValidationReport:
        x0 = tset.x0
        dh_rank_x0 = numeric_rank(system.output_jacobian(x0), self.tol_rel)
        ball = ball_samples(x0, self.ball_count, self.ball_radius)
        dh_ranks = [numeric_rank(system.output_jacobian(x), self.tol_rel) for x in ball]
        dh_pass = dh_rank_x0 == system.p and all(r == system.p for r in dh_ranks)

        gamma_residual = tset.residual(x0)
        base_pass = gamma_residual <= self.tol_base

        ratios = []
        invariance = []
        sampling_error = None
        try:
            samples = set_samples(
                tset, self.ball_count, self.ball_radius, self.tol_projection,
                self.projection["max_iterations"], self.projection["max_retries"],
            )
        except (NoConvergence, NotOnSet, RankDrop) as e:
            logger.warning(f"Could not sample the target set: {e}")
            sampling_error = str(e)
            samples = [x0]

        g_field, f_field = system.g, system.f
        for x in samples:
            dgamma = tset.constraint_jacobian(x)
            sv = np.linalg.svd(dgamma, compute_uv=False)
            ratios.append(float(sv[-1] / sv[0]) if sv[0] > 0 else 0.0)
            # controlled invariance: D gamma (f + g u) = 0 for some u
            a = dgamma @ g_field(x)
            b = dgamma @ f_field(x)
            u, *_ = np.linalg.lstsq(a.reshape(-1, 1), -b, rcond=None)
            invariance.append(SampleCheck(point=x.tolist(), value=float(np.max(np.abs(b + a * u[0])))))

        regular_pass = sampling_error is None and all(r > self.tol_rel for r in ratios)
        invariance_pass = sampling_error is None and all(c.value < self.tol_zero for c in invariance)
        passed = dh_pass and base_pass and regular_pass and invariance_pass

        logger.info(f"Validation {'passed' if passed else 'failed'}")
        return ValidationReport(
            n=system.n,
            p=system.p,
            nstar=tset.nstar,
            dh_rank_x0=dh_rank_x0,
            dh_ranks=dh_ranks,
            dh_rank_pass=dh_pass,
            gamma_residual_x0=gamma_residual,
            base_point_pass=base_pass,
            regular_value_ratios=ratios,
            regular_value_pass=regular_pass,
            controlled_invariance=invariance,
            controlled_invariance_pass=invariance_pass,
            set_sampling_error=sampling_error,
            passed=passed,
            tolerances={
                "rank_rel": self.tol_rel,
                "zero": self.tol_zero,
                "base_point": self.tol_base,
                "ball_radius": self.ball_radius,
            },
        )
