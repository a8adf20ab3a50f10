#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Lie calculus on symbolic vector fields.

Vector fields are tuples of expressions over one variable table. Lie
derivatives and brackets are exact; every rank decision made about the
resulting distributions is numeric and taken at sample points.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from core.errors import DimensionMismatch, NotConverged, RankDrop
from geometry.subspaces import DEFAULT_RANK_TOL, Frame, numeric_rank
from symbolic.diff import diff, jacobian
from symbolic.expr import Constant, Expr, ZERO, check_indices, compile_exprs, is_zero, simplify, to_text

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class VectorField:
    """n expressions, one per state coordinate."""

    components: Tuple[Expr, ...]

    def __post_init__(self):
        components = tuple(simplify(c) for c in self.components)
        object.__setattr__(self, "components", components)
        for c in components:
            check_indices(c, len(components))

    @classmethod
    def constant(cls, vector):
        return cls(tuple(Constant(float(v)) for v in np.asarray(vector, dtype=float).reshape(-1)))

    @classmethod
    def zero(cls, n):
        return cls((ZERO,) * n)

    @property
    def n(self):
        return len(self.components)

    def __len__(self):
        return len(self.components)

    def __getitem__(self, i):
        return self.components[i]

    @cached_property
    def _compiled(self):
        return compile_exprs(self.components, self.n)

    def __call__(self, x):
        return self._compiled(x)

    def is_zero(self):
        return all(is_zero(c) for c in self.components)

    def is_constant(self):
        return all(isinstance(c, Constant) for c in self.components)

    def constant_value(self):
        return np.array([c.value for c in self.components], dtype=float)

    @cached_property
    def constant_vector(self):
        """The field's value if it is constant, else None."""
        return self.constant_value() if self.is_constant() else None

    def scaled(self, factor: Expr):
        return VectorField(tuple(factor * c for c in self.components))

    def __add__(self, other):
        _check_same_dim(self, other)
        return VectorField(tuple(a + b for a, b in zip(self.components, other.components)))

    def __sub__(self, other):
        _check_same_dim(self, other)
        return VectorField(tuple(a - b for a, b in zip(self.components, other.components)))

    def to_text(self, vars):
        return [to_text(c, vars) for c in self.components]


def _check_same_dim(a, b):
    if a.n != b.n:
        raise DimensionMismatch(f"vector fields of length {a.n} and {b.n}")


def lie_derivative(lam: Expr, v: VectorField) -> Expr:
    """L_v lambda = sum_i (d lambda / d x_i) v_i, simplified."""
    total = ZERO
    for i, vi in enumerate(v.components):
        if is_zero(vi):
            continue
        di = diff(lam, i, v.n)
        if is_zero(di):
            continue
        total = total + di * vi
    return simplify(total)


def lie_bracket(a: VectorField, b: VectorField) -> VectorField:
    """[a, b] = Db a - Da b, componentwise."""
    _check_same_dim(a, b)
    return VectorField(tuple(
        lie_derivative(bk, a) - lie_derivative(ak, b)
        for ak, bk in zip(a.components, b.components)
    ))


def ad_iterates(f: VectorField, g: VectorField, k: int) -> List[VectorField]:
    """[ad^0_f g, ..., ad^k_f g]."""
    if k < 0:
        raise ValueError("k must be non-negative")
    fields = [g]
    for _ in range(k):
        fields.append(lie_bracket(f, fields[-1]))
    return fields


def jacobian_matrix(exprs, n):
    """Compiled evaluator x -> (len(exprs), n) Jacobian array."""
    rows = jacobian(exprs, n)
    flat = compile_exprs([e for row in rows for e in row], n)
    m = len(rows)
    return lambda x: flat(x).reshape(m, n)


@dataclass(frozen=True, eq=False)
class Distribution:
    """
    Span of symbolic generators, optionally augmented pointwise.

    `pointwise` supplies extra vectors (rows) at a point; it is how W enters
    when no symbolic kernel basis of Dh is available.
    """

    n: int
    generators: Tuple[VectorField, ...] = ()
    pointwise: Optional[Callable[[np.ndarray], np.ndarray]] = None
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "generators", tuple(self.generators))
        for gen in self.generators:
            if gen.n != self.n:
                raise DimensionMismatch(f"generator of length {gen.n} in a distribution on R^{self.n}")

    def __len__(self):
        return len(self.generators)

    def vectors(self, x):
        rows = [gen(x) for gen in self.generators]
        if self.pointwise is not None:
            extra = np.asarray(self.pointwise(np.asarray(x, dtype=float)), dtype=float)
            rows.extend(extra.reshape(-1, self.n))
        if not rows:
            return np.zeros((0, self.n))
        return np.vstack(rows)

    def frame(self, x, tol_rel=DEFAULT_RANK_TOL):
        return Frame(np.asarray(x, dtype=float), self.vectors(x), tol_rel)

    def plus(self, other, label=""):
        if other.n != self.n:
            raise DimensionMismatch(f"distributions on R^{self.n} and R^{other.n}")
        suppliers = [s for s in (self.pointwise, other.pointwise) if s is not None]
        pointwise = None
        if len(suppliers) == 1:
            pointwise = suppliers[0]
        elif suppliers:
            pointwise = lambda x: np.vstack([s(x).reshape(-1, self.n) for s in suppliers])
        return Distribution(self.n, self.generators + other.generators, pointwise, label or f"{self.label}+{other.label}")


def build_G(sys, i: int) -> Distribution:
    """G_i = span{ad^j_f g : 0 <= j <= i}; i = -1 gives the empty distribution."""
    if i < -1:
        raise ValueError("G_i is defined for i >= -1")
    if i == -1:
        return Distribution(sys.n, (), None, "G_-1")
    return Distribution(sys.n, tuple(ad_iterates(sys.f, sys.g, i)), None, f"G_{i}")


def output_kernel_W(sys, x, tol_rel=DEFAULT_RANK_TOL) -> Frame:
    """Orthonormal frame of ker(Dh_x)."""
    x = np.asarray(x, dtype=float)
    dh = sys.output_jacobian(x)
    rank = numeric_rank(dh, tol_rel)
    if rank < sys.p:
        raise RankDrop(f"rank(Dh) = {rank} < p = {sys.p} at {x.tolist()}")
    frame = Frame(x, dh, tol_rel)
    kernel = np.eye(sys.n) - frame.projector()
    return Frame(x, kernel, tol_rel).orthonormal()


def _identity_block(rows, n, p):
    """Columns J with dh_i/dx_{J_j} = delta_ij symbolically, or None."""
    columns = []
    for i in range(p):
        match = None
        for k in range(n):
            if k in columns:
                continue
            entry = rows[i][k]
            if not (isinstance(entry, Constant) and entry.value == 1.0):
                continue
            others = [rows[j][k] for j in range(p) if j != i]
            if all(is_zero(e) for e in others):
                match = k
                break
        if match is None:
            return None
        columns.append(match)
    return columns


@dataclass(frozen=True, eq=False)
class KernelGenerators:
    """How W = ann(span dh) was realized."""

    distribution: Distribution
    method: str  # "identity-block", "constant", "frozen"


def output_kernel_generators(sys) -> KernelGenerators:
    """
    Vector fields spanning W = ker Dh.

    Tries an identity-like block of Dh first (exact fields e_k - sum_i dh_i/dx_k e_{J_i}),
    then a constant Dh (numeric null-space constants), then falls back to a
    pointwise kernel frame evaluated wherever the distribution is sampled.
    """
    n, p = sys.n, sys.p
    rows = jacobian(sys.h, n)

    columns = _identity_block(rows, n, p)
    if columns is not None:
        fields = []
        for k in range(n):
            if k in columns:
                continue
            comps = [ZERO] * n
            comps[k] = Constant(1.0)
            for i, j in enumerate(columns):
                comps[j] = comps[j] - rows[i][k]
            fields.append(VectorField(tuple(comps)))
        return KernelGenerators(Distribution(n, tuple(fields), None, "W"), "identity-block")

    if all(isinstance(e, Constant) for row in rows for e in row):
        dh = np.array([[e.value for e in row] for row in rows])
        frame = output_kernel_W(sys, np.zeros(n))
        fields = tuple(VectorField.constant(v) for v in frame.vectors)
        logger.debug(f"W from constant Dh of rank {numeric_rank(dh)}")
        return KernelGenerators(Distribution(n, fields, None, "W"), "constant")

    logger.warning("Dh has no symbolic kernel basis; W enters as per-sample frozen frames")
    pointwise = lambda x: output_kernel_W(sys, x).vectors
    return KernelGenerators(Distribution(n, (), pointwise, "W"), "frozen")


class ClosureReport(BaseModel):
    """Per-sample rank evidence for an involutive closure."""

    sweeps: int
    converged: bool
    regular: bool
    final_ranks: List[int]
    rank_history: List[List[int]] = Field(default_factory=list)
    generator_count: int
    added_brackets: List[str] = Field(default_factory=list)
    w_method: Optional[str] = None
    samples: List[List[float]] = Field(default_factory=list)
    tol_rel: float


@dataclass
class _SampleState:
    point: np.ndarray
    rows: np.ndarray
    rank: int = field(init=False)
    tol_rel: float = DEFAULT_RANK_TOL

    def __post_init__(self):
        self.rank = numeric_rank(self.rows, self.tol_rel) if self.rows.size else 0

    def try_add(self, vector):
        stacked = np.vstack([self.rows, vector]) if self.rows.size else vector.reshape(1, -1)
        new_rank = numeric_rank(stacked, self.tol_rel)
        return stacked, new_rank


def involutive_closure(D: Distribution, extra: Optional[Distribution], region: Sequence[np.ndarray],
                       tol_rel=DEFAULT_RANK_TOL, max_sweeps=None, strict=False, w_method=None):
    """
    Smallest bracket-closed distribution containing D (+ extra), decided on samples.

    A bracket is adjoined only when it raises the rank at some sample. Sweeps
    stop when a sweep adjoins nothing or the rank is n everywhere.

    Args:
        D: Distribution to close
        extra: Optional distribution added before closing (the W term)
        region: Nonempty list of sample points
        tol_rel: Relative singular value cutoff
        max_sweeps: Sweep cap, default 2(n+1)
        strict: Raise NotConverged instead of only reporting it
        w_method: How the extra distribution was realized, copied into the report

    Returns:
        (closed Distribution, ClosureReport)
    """
    region = [np.asarray(x, dtype=float) for x in region]
    if not region:
        raise ValueError("involutive closure needs at least one sample point")
    n = D.n
    base = D.plus(extra, label=f"inv({D.label}+{extra.label})") if extra is not None else D
    cap = max_sweeps if max_sweeps is not None else 2 * (n + 1)

    generators = list(base.generators)
    states = [_SampleState(x, base.vectors(x), tol_rel=tol_rel) for x in region]
    history = [[s.rank for s in states]]
    processed = set()
    added = []
    sweeps = 0
    converged = True

    def full_rank():
        return all(s.rank == n for s in states)

    while not full_rank():
        if sweeps >= cap:
            converged = False
            break
        sweeps += 1
        count = len(generators)
        adjoined = False
        for i in range(count):
            for j in range(i + 1, count):
                if (i, j) in processed:
                    continue
                processed.add((i, j))
                bracket = lie_bracket(generators[i], generators[j])
                if bracket.is_zero():
                    continue
                updates = []
                raises = False
                for state in states:
                    stacked, new_rank = state.try_add(bracket(state.point))
                    updates.append((stacked, new_rank))
                    raises = raises or new_rank > state.rank
                if not raises:
                    continue
                generators.append(bracket)
                added.append(f"[{i},{j}]")
                adjoined = True
                for state, (stacked, new_rank) in zip(states, updates):
                    state.rows, state.rank = stacked, new_rank
                logger.debug(f"closure sweep {sweeps}: adjoined bracket [{i},{j}]")
        history.append([s.rank for s in states])
        if not adjoined:
            break

    final = [s.rank for s in states]
    regular = len(set(final)) == 1
    report = ClosureReport(
        sweeps=sweeps,
        converged=converged,
        regular=regular,
        final_ranks=final,
        rank_history=history,
        generator_count=len(generators),
        added_brackets=added,
        w_method=w_method,
        samples=[x.tolist() for x in region],
        tol_rel=tol_rel,
    )
    if not converged:
        logger.warning(f"involutive closure still growing after {cap} sweeps")
        if strict:
            raise NotConverged(f"involutive closure still growing after {cap} sweeps")
    if not regular:
        logger.warning(f"involutive closure rank varies across samples: {sorted(set(final))}")
    closed = Distribution(n, tuple(generators), base.pointwise, base.label)
    return closed, report


def bracket_residual(D: Distribution, points, tol_rel=DEFAULT_RANK_TOL):
    """Largest relative residual of a pairwise generator bracket outside span D(x), over points."""
    gens = D.generators
    brackets = []
    for i in range(len(gens)):
        for j in range(i + 1, len(gens)):
            b = lie_bracket(gens[i], gens[j])
            if not b.is_zero():
                brackets.append(b)
    worst = 0.0
    for x in points:
        frame = D.frame(x, tol_rel)
        for b in brackets:
            worst = max(worst, frame.contains(b(x)))
    return worst
