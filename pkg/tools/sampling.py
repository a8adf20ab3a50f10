#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Deterministic sample generation.

Low-discrepancy (Halton) points mapped onto balls, so every report built
from them is reproducible run to run.
"""

import logging

import numpy as np
from scipy.stats import qmc

logger = logging.getLogger(__name__)


def halton_ball(dim, count, radius):
    """
    count points in the closed ball of the given radius in R^dim, origin first.

    The unit cube is mapped onto the ball radially (sup-norm shells go to
    Euclidean shells), which keeps the low-discrepancy layout.
    """
    if count <= 0:
        return np.zeros((0, dim))
    points = [np.zeros(dim)]
    if count > 1:
        sampler = qmc.Halton(d=dim, scramble=False)
        sampler.fast_forward(1)
        cube = 2.0 * sampler.random(count - 1) - 1.0
        for p in cube:
            norm2 = np.linalg.norm(p)
            if norm2 == 0.0:
                points.append(np.zeros(dim))
                continue
            points.append(p * (np.max(np.abs(p)) / norm2) * radius)
    return np.array(points)


def ball_samples(center, count, radius):
    """Full-dimensional Halton samples around center."""
    center = np.asarray(center, dtype=float)
    return center + halton_ball(center.shape[0], count, radius)


def random_points(center, count, radius, seed):
    """Seeded uniform points in the cube of half-width radius around center."""
    center = np.asarray(center, dtype=float)
    rng = np.random.default_rng(seed)
    return center + rng.uniform(-radius, radius, size=(count, center.shape[0]))
