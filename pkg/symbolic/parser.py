#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Recursive-descent parser for the expression language.

Grammar (standard precedence, left-associative except ^):

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := ('-' | '+') unary | power
    power   := atom ('^' exponent)*
    exponent:= ['-' | '+'] INTEGER | '(' ['-' | '+'] INTEGER ')'
    atom    := NUMBER | FUNC '(' expr ')' | IDENT | '(' expr ')'

FUNC is one of sin, cos, exp. Exponents must be integer literals.
"""

import re
import logging
from dataclasses import dataclass
from typing import List

from core.errors import ExprSyntaxError, UnknownVariable
from symbolic.expr import Constant, Unary, Var, VarTable, Binary, power, simplify, evaluate, free_indices

logger = logging.getLogger(__name__)

FUNCTIONS = ("sin", "cos", "exp")

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    position: int


def tokenize(text):
    """Split text into tokens; whitespace is dropped."""
    tokens: List[Token] = []
    pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            raise ExprSyntaxError(pos, f"unexpected character {text[pos]!r}")
        kind = match.lastgroup
        if kind != "ws":
            tokens.append(Token(kind, match.group(), pos))
        pos = match.end()
    tokens.append(Token("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text, vars):
        self.text = text
        self.vars = vars
        self.tokens = tokenize(text)
        self.pos = 0

    @property
    def current(self):
        return self.tokens[self.pos]

    def advance(self):
        token = self.tokens[self.pos]
        self.pos += 1
        return token

    def accept(self, text):
        if self.current.kind == "op" and self.current.text == text:
            return self.advance()
        return None

    def expect(self, text):
        token = self.accept(text)
        if token is None:
            raise ExprSyntaxError(self.current.position, f"expected {text!r}, found {self.current.text or 'end of input'!r}")
        return token

    def parse(self):
        result = self.expr()
        if self.current.kind != "end":
            raise ExprSyntaxError(self.current.position, f"unexpected {self.current.text!r}")
        return result

    def expr(self):
        left = self.term()
        while True:
            if self.accept("+"):
                left = Binary("add", left, self.term())
            elif self.accept("-"):
                left = Binary("sub", left, self.term())
            else:
                return left

    def term(self):
        left = self.unary()
        while True:
            if self.accept("*"):
                left = Binary("mul", left, self.unary())
            elif self.accept("/"):
                left = Binary("div", left, self.unary())
            else:
                return left

    def unary(self):
        if self.accept("-"):
            return Unary("neg", self.unary())
        if self.accept("+"):
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        exponents = []
        while self.accept("^"):
            exponents.append((self.current.position, self.exponent()))
        if not exponents:
            return base
        # right-associative tower folded in integers: e^k must stay integral
        k = exponents[-1][1]
        for position, e in reversed(exponents[:-1]):
            if k < 0 and abs(e) != 1:
                raise ExprSyntaxError(position, "exponent must be an integer")
            k = e ** k if k >= 0 else (1 if e == 1 or k % 2 == 0 else -1)
        return power(base, k)

    def exponent(self):
        parenthesized = self.accept("(") is not None
        sign = 1
        if self.accept("-"):
            sign = -1
        elif self.accept("+"):
            sign = 1
        token = self.current
        if token.kind == "ident" and token.text not in self.vars and token.text not in FUNCTIONS:
            raise UnknownVariable(token.text)
        if token.kind != "number" or not token.text.isdigit():
            raise ExprSyntaxError(token.position, "exponent must be an integer literal")
        self.advance()
        if parenthesized:
            self.expect(")")
        return sign * int(token.text)

    def atom(self):
        token = self.current
        if token.kind == "number":
            self.advance()
            return Constant(float(token.text))
        if token.kind == "ident":
            self.advance()
            if self.current.kind == "op" and self.current.text == "(":
                if token.text not in FUNCTIONS:
                    raise ExprSyntaxError(token.position, f"unknown function {token.text!r}")
                self.expect("(")
                inner = self.expr()
                self.expect(")")
                return Unary(token.text, inner)
            if token.text not in self.vars:
                raise UnknownVariable(token.text)
            return Var(self.vars.index(token.text))
        if self.accept("("):
            inner = self.expr()
            self.expect(")")
            return inner
        raise ExprSyntaxError(token.position, f"unexpected {token.text or 'end of input'!r}")


def parse(text, vars):
    """
    Parse expression text against a variable table.

    Args:
        text: Expression source
        vars: VarTable or sequence of names

    Returns:
        Expression tree (unsimplified, so printing reflects the input)

    Raises:
        ExprSyntaxError: malformed input
        UnknownVariable: identifier not declared in vars
    """
    if not isinstance(vars, VarTable):
        vars = VarTable(tuple(vars))
    return _Parser(text, vars).parse()


def parse_constant(text, vars):
    """Parse an expression that must not reference any variable and return its value."""
    e = simplify(parse(text, vars))
    if free_indices(e):
        raise ExprSyntaxError(0, f"expected a constant, got {text!r}")
    return evaluate(e, [0.0] * len(vars))
