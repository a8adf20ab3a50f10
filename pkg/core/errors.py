#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Error types for the transverse feedback linearization toolkit.

Two families: InputError for malformed user input (exit code 2 in the CLI)
and NumericalFailure for computations that ran but could not finish
(exit code 3).
"""


class TflError(Exception):
    """Root of all toolkit errors."""


class InputError(TflError):
    """The user supplied something we cannot work with."""


class NumericalFailure(TflError):
    """A numerical procedure failed to produce a trustworthy result."""


class ExprSyntaxError(InputError):
    """Malformed expression text."""

    def __init__(self, position, message):
        self.position = position
        self.message = message
        super().__init__(f"syntax error at position {position}: {message}")


class UnknownVariable(InputError):
    """Identifier that is not part of the declared variable table."""

    def __init__(self, name):
        self.name = name
        super().__init__(f"unknown variable: {name}")


class FormatError(InputError):
    """Malformed system-definition file."""

    def __init__(self, line, message):
        self.line = line
        self.message = message
        super().__init__(f"line {line}: {message}")


class DimensionMismatch(InputError):
    pass


class PreconditionError(InputError):
    pass


class NotSymbolic(InputError):
    pass


class DivByZero(NumericalFailure):
    pass


class NotOnSet(NumericalFailure):
    pass


class RankDrop(NumericalFailure):
    pass


class NoConvergence(NumericalFailure):
    pass


class NotConverged(NumericalFailure):
    pass


class IndependenceFailure(NumericalFailure):
    pass


class IntegratorBlowup(NumericalFailure):
    pass


class VerificationFailure(NumericalFailure):
    """A constructed chart failed its post-hoc checks."""

    def __init__(self, check, message):
        self.check = check
        super().__init__(f"{check}: {message}")


class RelativeDegreeUndefined(NumericalFailure):
    def __init__(self, message, report=None):
        self.report = report
        super().__init__(message)


class Blowup(NumericalFailure):
    pass
