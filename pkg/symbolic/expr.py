#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Scalar expression trees over named state variables.

Expressions are immutable frozen dataclasses. Evaluation, differentiation
and simplification dispatch on the node type with functools.singledispatch,
so adding a node type means registering one handler per operation.
"""

import math
import logging
from dataclasses import dataclass
from functools import singledispatch
from typing import Callable, Iterable, Sequence, Tuple

import numpy as np

from core.errors import Blowup, DivByZero, DimensionMismatch, InputError

logger = logging.getLogger(__name__)

UNARY_OPS = ("neg", "sin", "cos", "exp")
BINARY_OPS = ("add", "sub", "mul", "div")

_BINARY_SYMBOLS = {"add": "+", "sub": "-", "mul": "*", "div": "/"}


@dataclass(frozen=True)
class VarTable:
    """Ordered state-coordinate names; the order fixes the coordinate convention."""

    names: Tuple[str, ...]

    def __post_init__(self):
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        if not names:
            raise InputError("variable table must not be empty")
        if len(set(names)) != len(names):
            raise InputError(f"duplicate variable names in {names}")

    def __len__(self):
        return len(self.names)

    def __iter__(self):
        return iter(self.names)

    def index(self, name):
        return self.names.index(name)

    def __contains__(self, name):
        return name in self.names


class Expr:
    """Base class of all expression nodes; supports arithmetic operators."""

    def __add__(self, other):
        return Binary("add", self, _coerce(other))

    def __radd__(self, other):
        return Binary("add", _coerce(other), self)

    def __sub__(self, other):
        return Binary("sub", self, _coerce(other))

    def __rsub__(self, other):
        return Binary("sub", _coerce(other), self)

    def __mul__(self, other):
        return Binary("mul", self, _coerce(other))

    def __rmul__(self, other):
        return Binary("mul", _coerce(other), self)

    def __truediv__(self, other):
        return Binary("div", self, _coerce(other))

    def __rtruediv__(self, other):
        return Binary("div", _coerce(other), self)

    def __neg__(self):
        return Unary("neg", self)

    def __pow__(self, exponent):
        if not isinstance(exponent, int):
            raise InputError("only integer exponents are supported")
        return power(self, exponent)


@dataclass(frozen=True, eq=True)
class Constant(Expr):
    value: float


@dataclass(frozen=True, eq=True)
class Var(Expr):
    index: int


@dataclass(frozen=True, eq=True)
class Unary(Expr):
    op: str
    child: Expr

    def __post_init__(self):
        if self.op not in UNARY_OPS:
            raise InputError(f"unknown unary operator {self.op}")


@dataclass(frozen=True, eq=True)
class Binary(Expr):
    op: str
    left: Expr
    right: Expr

    def __post_init__(self):
        if self.op not in BINARY_OPS:
            raise InputError(f"unknown binary operator {self.op}")


@dataclass(frozen=True, eq=True)
class PowInt(Expr):
    base: Expr
    exponent: int


ZERO = Constant(0.0)
ONE = Constant(1.0)


def _coerce(value):
    if isinstance(value, Expr):
        return value
    return Constant(float(value))


def power(base, exponent):
    """Build base^exponent; x^0 folds to the constant 1."""
    if isinstance(exponent, bool) or not isinstance(exponent, (int, np.integer)):
        raise InputError(f"exponent must be an integer, got {exponent!r}")
    if exponent == 0:
        return ONE
    return PowInt(base, int(exponent))


def sin(e):
    return Unary("sin", _coerce(e))


def cos(e):
    return Unary("cos", _coerce(e))


def exp(e):
    return Unary("exp", _coerce(e))


def is_zero(e):
    return isinstance(e, Constant) and e.value == 0.0


def is_one(e):
    return isinstance(e, Constant) and e.value == 1.0


# Evaluation

_UNARY_FUNCS = {
    "neg": lambda a: -a,
    "sin": math.sin,
    "cos": math.cos,
    "exp": math.exp,
}


def _binary_value(op, a, b):
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if b == 0.0:
        raise DivByZero("division by zero")
    return a / b


def _power_value(a, k):
    if a == 0.0 and k < 0:
        raise DivByZero("zero raised to a negative power")
    return a ** k


@singledispatch
def _evaluate(node, x):
    raise TypeError(f"not an expression node: {node!r}")


@_evaluate.register
def _(node: Constant, x):
    return node.value


@_evaluate.register
def _(node: Var, x):
    return float(x[node.index])


@_evaluate.register
def _(node: Unary, x):
    return _UNARY_FUNCS[node.op](_evaluate(node.child, x))


@_evaluate.register
def _(node: Binary, x):
    return _binary_value(node.op, _evaluate(node.left, x), _evaluate(node.right, x))


@_evaluate.register
def _(node: PowInt, x):
    return _power_value(_evaluate(node.base, x), node.exponent)


def evaluate(e, x, n_vars=None):
    """
    Evaluate an expression at a point.

    Args:
        e: Expression
        x: Point, indexable by variable index
        n_vars: Optional declared variable count, checked against len(x)

    Returns:
        Float value

    Raises:
        DivByZero: if a denominator is exactly zero at x
    """
    if n_vars is not None and len(x) != n_vars:
        raise DimensionMismatch(f"point has {len(x)} entries, expected {n_vars}")
    return float(_evaluate(e, x))


# Simplification

@singledispatch
def _simplify(node):
    return node


@_simplify.register
def _(node: Unary):
    child = _simplify(node.child)
    if isinstance(child, Constant):
        try:
            return Constant(float(_UNARY_FUNCS[node.op](child.value)))
        except OverflowError:
            return Unary(node.op, child)
    if node.op == "neg" and isinstance(child, Unary) and child.op == "neg":
        return child.child
    return Unary(node.op, child)


@_simplify.register
def _(node: Binary):
    left = _simplify(node.left)
    right = _simplify(node.right)
    op = node.op

    if isinstance(left, Constant) and isinstance(right, Constant):
        if not (op == "div" and right.value == 0.0):
            return Constant(float(_binary_value(op, left.value, right.value)))

    if op == "add":
        if is_zero(left):
            return right
        if is_zero(right):
            return left
    elif op == "sub":
        if is_zero(right):
            return left
        if is_zero(left):
            return _simplify(Unary("neg", right))
    elif op == "mul":
        if is_zero(left) or is_zero(right):
            return ZERO
        if is_one(left):
            return right
        if is_one(right):
            return left
    elif op == "div":
        if is_zero(left) and not is_zero(right):
            return ZERO
        if is_one(right):
            return left
    return Binary(op, left, right)


@_simplify.register
def _(node: PowInt):
    base = _simplify(node.base)
    if node.exponent == 0:
        return ONE
    if node.exponent == 1:
        return base
    if isinstance(base, Constant) and not (base.value == 0.0 and node.exponent < 0):
        return Constant(float(base.value ** node.exponent))
    return PowInt(base, node.exponent)


def simplify(e):
    """Constant folding plus the neutral/absorbing element identities."""
    return _simplify(e)


# Structure queries

@singledispatch
def free_indices(node):
    return frozenset()


@free_indices.register
def _(node: Var):
    return frozenset([node.index])


@free_indices.register
def _(node: Unary):
    return free_indices(node.child)


@free_indices.register
def _(node: Binary):
    return free_indices(node.left) | free_indices(node.right)


@free_indices.register
def _(node: PowInt):
    return free_indices(node.base)


def is_constant(e):
    return isinstance(simplify(e), Constant)


@singledispatch
def _substitute(node, mapping):
    return node


@_substitute.register
def _(node: Var, mapping):
    return mapping.get(node.index, node)


@_substitute.register
def _(node: Unary, mapping):
    return Unary(node.op, _substitute(node.child, mapping))


@_substitute.register
def _(node: Binary, mapping):
    return Binary(node.op, _substitute(node.left, mapping), _substitute(node.right, mapping))


@_substitute.register
def _(node: PowInt, mapping):
    return PowInt(_substitute(node.base, mapping), node.exponent)


def substitute(e, mapping):
    """Replace Var(i) by mapping[i] wherever i is a key; result simplified."""
    return simplify(_substitute(e, mapping))


def check_indices(e, n_vars):
    """Raise DimensionMismatch if e references a variable index >= n_vars."""
    bad = [i for i in free_indices(e) if i >= n_vars]
    if bad:
        raise DimensionMismatch(f"expression uses variable index {max(bad)} >= {n_vars}")


# Printing

@singledispatch
def _to_text(node, names):
    raise TypeError(f"not an expression node: {node!r}")


@_to_text.register
def _(node: Constant, names):
    text = repr(float(node.value))
    return f"({text})" if node.value < 0 or text.startswith("-") else text


@_to_text.register
def _(node: Var, names):
    return names[node.index]


@_to_text.register
def _(node: Unary, names):
    inner = _to_text(node.child, names)
    if node.op == "neg":
        return f"(-{inner})"
    return f"{node.op}({inner})"


@_to_text.register
def _(node: Binary, names):
    return f"({_to_text(node.left, names)} {_BINARY_SYMBOLS[node.op]} {_to_text(node.right, names)})"


@_to_text.register
def _(node: PowInt, names):
    return f"({_to_text(node.base, names)}^{node.exponent})"


def to_text(e, vars):
    """Fully parenthesized infix text that the parser reads back."""
    return _to_text(e, tuple(vars))


# Compilation to Python callables for the numeric hot loops

@singledispatch
def _to_python(node):
    raise TypeError(f"not an expression node: {node!r}")


@_to_python.register
def _(node: Constant):
    return f"({float(node.value)!r})"


@_to_python.register
def _(node: Var):
    return f"_v{node.index}"


@_to_python.register
def _(node: Unary):
    inner = _to_python(node.child)
    if node.op == "neg":
        return f"(-{inner})"
    return f"_{node.op}({inner})"


@_to_python.register
def _(node: Binary):
    return f"({_to_python(node.left)} {_BINARY_SYMBOLS[node.op]} {_to_python(node.right)})"


@_to_python.register
def _(node: PowInt):
    return f"({_to_python(node.base)} ** {node.exponent})"


_COMPILE_NAMESPACE = {"_sin": math.sin, "_cos": math.cos, "_exp": math.exp}


def compile_exprs(exprs: Sequence[Expr], n_vars: int) -> Callable[[Iterable[float]], np.ndarray]:
    """
    Compile expressions into one callable returning a float array.

    The generated function raises DivByZero exactly where evaluate() does.

    Args:
        exprs: Expressions sharing one variable table
        n_vars: Number of variables

    Returns:
        Callable mapping a point to an array of len(exprs) values
    """
    exprs = [simplify(e) for e in exprs]
    for e in exprs:
        check_indices(e, n_vars)
    if not exprs:
        return lambda x: np.zeros(0)
    unpack = ", ".join(f"_v{i}" for i in range(n_vars))
    body = ", ".join(_to_python(e) for e in exprs)
    source = (
        "def _compiled(_x):\n"
        f"    {unpack}, = _x\n"
        f"    return ({body}{',' if len(exprs) == 1 else ''})\n"
    )
    namespace = dict(_COMPILE_NAMESPACE)
    exec(compile(source, "<compiled-expr>", "exec"), namespace)
    raw = namespace["_compiled"]
    n_out = len(exprs)

    def evaluator(x):
        try:
            values = raw([float(v) for v in x])
        except ZeroDivisionError as e:
            raise DivByZero(str(e))
        except OverflowError as e:
            raise Blowup(f"overflow while evaluating: {e}")
        return np.array(values, dtype=float)

    return evaluator
