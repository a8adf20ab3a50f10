#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Exact symbolic partial derivatives of expression trees.
"""

from functools import singledispatch

from core.errors import DimensionMismatch
from symbolic.expr import (
    Binary,
    Constant,
    ONE,
    PowInt,
    Unary,
    Var,
    ZERO,
    cos,
    power,
    simplify,
    sin,
)


@singledispatch
def _diff(node, i):
    raise TypeError(f"not an expression node: {node!r}")


@_diff.register
def _(node: Constant, i):
    return ZERO


@_diff.register
def _(node: Var, i):
    return ONE if node.index == i else ZERO


@_diff.register
def _(node: Unary, i):
    u = node.child
    du = _diff(u, i)
    if node.op == "neg":
        return -du
    if node.op == "sin":
        return cos(u) * du
    if node.op == "cos":
        return -(sin(u) * du)
    # exp
    return node * du


@_diff.register
def _(node: Binary, i):
    u, v = node.left, node.right
    du, dv = _diff(u, i), _diff(v, i)
    if node.op == "add":
        return du + dv
    if node.op == "sub":
        return du - dv
    if node.op == "mul":
        return du * v + u * dv
    return (du * v - u * dv) / power(v, 2)


@_diff.register
def _(node: PowInt, i):
    k = node.exponent
    return Constant(float(k)) * power(node.base, k - 1) * _diff(node.base, i)


def diff(e, i, n_vars=None):
    """
    Partial derivative of e with respect to variable i, simplified.

    Args:
        e: Expression
        i: Variable index
        n_vars: Optional variable count to validate i against

    Returns:
        Simplified derivative expression
    """
    if n_vars is not None and not 0 <= i < n_vars:
        raise DimensionMismatch(f"variable index {i} out of range for {n_vars} variables")
    return simplify(_diff(e, i))


def gradient(e, n_vars):
    """All first partials of e as a tuple of simplified expressions."""
    return tuple(diff(e, i) for i in range(n_vars))


def jacobian(exprs, n_vars):
    """Row-major symbolic Jacobian of a tuple of expressions."""
    return tuple(gradient(e, n_vars) for e in exprs)
