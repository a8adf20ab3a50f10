#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Pointwise subspace arithmetic.

A Frame is an ordered list of vectors in R^n attached to a base point; all
rank decisions go through singular values with a relative cutoff. Dual
spaces are identified with R^n through the Euclidean pairing, so the
annihilator of a frame is its orthogonal complement.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from core.errors import DimensionMismatch

logger = logging.getLogger(__name__)

DEFAULT_RANK_TOL = 1e-8

# Singular values below this are zero regardless of the relative cutoff.
_ABS_FLOOR = 1e-14


def numeric_rank(matrix, tol_rel=DEFAULT_RANK_TOL):
    """Count singular values above tol_rel * sigma_max."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    if matrix.size == 0:
        return 0
    sv = np.linalg.svd(matrix, compute_uv=False)
    if sv[0] <= _ABS_FLOOR:
        return 0
    return int(np.sum(sv > tol_rel * sv[0]))


@dataclass(frozen=True, eq=False)
class Frame:
    """
    Ordered vectors spanning a subspace of R^n at a base point.

    Vectors are stored as the rows of an (m, n) array.
    """

    point: np.ndarray
    vectors: np.ndarray
    tol_rel: float = DEFAULT_RANK_TOL
    rank: int = field(init=False)

    def __post_init__(self):
        point = np.asarray(self.point, dtype=float).reshape(-1)
        n = point.shape[0]
        vectors = np.asarray(self.vectors, dtype=float)
        if vectors.size == 0:
            vectors = np.zeros((0, n))
        vectors = np.atleast_2d(vectors)
        if vectors.shape[1] != n:
            raise DimensionMismatch(f"frame vectors have length {vectors.shape[1]}, expected {n}")
        object.__setattr__(self, "point", point)
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "rank", numeric_rank(vectors, self.tol_rel))

    @property
    def dim(self):
        """Ambient dimension n."""
        return self.point.shape[0]

    @property
    def count(self):
        return self.vectors.shape[0]

    def basis(self):
        """Orthonormal basis (rows) of the spanned subspace."""
        if self.rank == 0:
            return np.zeros((0, self.dim))
        _, _, vt = np.linalg.svd(self.vectors)
        return vt[: self.rank]

    def projector(self):
        q = self.basis()
        return q.T @ q

    def orthonormal(self):
        return Frame(self.point, self.basis(), self.tol_rel)

    def contains(self, v):
        """Relative residual of v after projecting onto the frame."""
        v = np.asarray(v, dtype=float)
        norm = np.linalg.norm(v)
        if norm <= _ABS_FLOOR:
            return 0.0
        return float(np.linalg.norm(v - self.projector() @ v) / norm)

    def to_dict(self):
        return {
            "point": self.point.tolist(),
            "vectors": self.vectors.tolist(),
            "rank": self.rank,
            "tol_rel": self.tol_rel,
        }


def _check_compatible(f1, f2):
    if f1.dim != f2.dim:
        raise DimensionMismatch(f"frames live in R^{f1.dim} and R^{f2.dim}")
    if not np.allclose(f1.point, f2.point, rtol=0.0, atol=1e-12):
        raise DimensionMismatch("frames are attached to different base points")


def span_sum(f1, f2):
    """Rank-revealing basis of F1 + F2."""
    _check_compatible(f1, f2)
    stacked = np.vstack([f1.vectors, f2.vectors])
    return Frame(f1.point, stacked, f1.tol_rel).orthonormal()


def annihilator(frame):
    """Orthogonal complement of the frame's span."""
    n = frame.dim
    if frame.rank == 0:
        return Frame(frame.point, np.eye(n), frame.tol_rel)
    null = scipy.linalg.null_space(frame.vectors, rcond=frame.tol_rel)
    return Frame(frame.point, null.T, frame.tol_rel)


def intersect(f1, f2):
    """F1 ∩ F2 computed as ann(ann(F1) + ann(F2))."""
    _check_compatible(f1, f2)
    return annihilator(span_sum(annihilator(f1), annihilator(f2)))


def rank(frame):
    return frame.rank


def is_direct_sum(f1, f2):
    return span_sum(f1, f2).rank == f1.rank + f2.rank


def projector_distance(f1, f2):
    """Frobenius distance between the orthogonal projectors of two frames."""
    _check_compatible(f1, f2)
    return float(np.linalg.norm(f1.projector() - f2.projector(), ord="fro"))
