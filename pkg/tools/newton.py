#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Damped Newton iteration with finite-difference Jacobians.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from core.errors import NoConvergence, NumericalFailure

logger = logging.getLogger(__name__)

MAX_HALVINGS = 20


@dataclass
class NewtonResult:
    s: np.ndarray
    residual: float
    iterations: int
    jacobian: np.ndarray


def central_jacobian(F, s, step=1e-6):
    """Column j is (F(s + h e_j) - F(s - h e_j)) / 2h."""
    s = np.asarray(s, dtype=float)
    columns = []
    for j in range(s.shape[0]):
        e = np.zeros_like(s)
        e[j] = step
        columns.append((F(s + e) - F(s - e)) / (2.0 * step))
    return np.column_stack(columns)


def _safe_norm(F, s):
    try:
        value = F(s)
    except NumericalFailure:
        return None, np.inf
    if not np.all(np.isfinite(value)):
        return None, np.inf
    return value, float(np.max(np.abs(value)))


def damped_newton(F: Callable[[np.ndarray], np.ndarray], s0, tol=1e-9, max_iterations=50,
                  fd_step=1e-6, jacobian: Optional[np.ndarray] = None, bound=None,
                  refresh_ratio=0.5):
    """
    Solve F(s) = 0 from s0.

    The Jacobian is a central-difference estimate; it is kept across
    iterations while the residual keeps shrinking by at least refresh_ratio
    and recomputed otherwise. Steps are halved while the residual grows.

    Args:
        F: Residual map R^n -> R^n
        s0: Initial guess
        tol: Success when ||F||_inf < tol
        max_iterations: Iteration cap
        fd_step: Finite-difference step
        jacobian: Optional initial Jacobian (e.g. from a neighboring solve)
        bound: Optional cap on ||s||_inf; leaving it counts as divergence
        refresh_ratio: Reuse the Jacobian while ||F_new|| <= refresh_ratio * ||F||

    Returns:
        NewtonResult with the Jacobian at the last refresh

    Raises:
        NoConvergence: iteration cap hit, singular Jacobian or divergence
    """
    s = np.array(s0, dtype=float)
    value, norm = _safe_norm(F, s)
    if value is None:
        raise NoConvergence("residual is not finite at the initial guess")

    J = None if jacobian is None else np.array(jacobian, dtype=float)
    fresh = False
    for iteration in range(max_iterations):
        if norm < tol:
            if J is None:
                J = central_jacobian(F, s, fd_step)
            return NewtonResult(s, norm, iteration, J)
        if J is None:
            J = central_jacobian(F, s, fd_step)
            fresh = True
        try:
            step = np.linalg.solve(J, -value)
        except np.linalg.LinAlgError:
            raise NoConvergence(f"singular Jacobian at iteration {iteration}")

        if bound is not None and np.max(np.abs(s + step)) > bound:
            raise NoConvergence(f"Newton step leaves the region |s| <= {bound}")

        damping = 1.0
        for _ in range(MAX_HALVINGS):
            candidate = s + damping * step
            new_value, new_norm = _safe_norm(F, candidate)
            if new_norm < norm:
                break
            damping *= 0.5
        else:
            if fresh:
                raise NoConvergence(f"no descent along the Newton direction at iteration {iteration}")
            J = None
            continue

        ratio = new_norm / norm
        s, value, norm = candidate, new_value, new_norm
        fresh = False
        if ratio > refresh_ratio:
            J = None
        logger.debug(f"newton iteration {iteration}: |F| = {norm:.3e}, damping {damping}")

    if norm < tol:
        if J is None:
            J = central_jacobian(F, s, fd_step)
        return NewtonResult(s, norm, max_iterations, J)
    raise NoConvergence(f"|F| = {norm:.3e} after {max_iterations} iterations")
