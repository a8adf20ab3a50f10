"""Expression language: parsing, evaluation, differentiation, simplification."""

from symbolic.expr import (
    Binary,
    Constant,
    Expr,
    PowInt,
    Unary,
    Var,
    VarTable,
    compile_exprs,
    evaluate,
    simplify,
    to_text,
)
from symbolic.diff import diff, gradient, jacobian
from symbolic.parser import parse, parse_constant

__all__ = [
    "Binary",
    "Constant",
    "Expr",
    "PowInt",
    "Unary",
    "Var",
    "VarTable",
    "compile_exprs",
    "diff",
    "evaluate",
    "gradient",
    "jacobian",
    "parse",
    "parse_constant",
    "simplify",
    "to_text",
]
