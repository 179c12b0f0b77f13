"""Dense vector primitives with instrumented cost counters.

Every distance, projection and angle computation made by the tree and the
search routines goes through this module so that the number of O(D) vector
operations can be reported per query (NDC).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class DimensionMismatch(ValueError):
    """Raised when two vectors (or a vector and a matrix) disagree in length."""


class DegenerateVector(ValueError):
    """Raised when an angle is requested for a zero-norm vector."""


@dataclass
class CountedMetric:
    """Per-query (or per-build) operation counters."""

    distance_evals: int = 0
    projection_evals: int = 0
    angle_evals: int = 0

    @property
    def total(self) -> int:
        return self.distance_evals + self.projection_evals + self.angle_evals

    def reset(self) -> None:
        self.distance_evals = 0
        self.projection_evals = 0
        self.angle_evals = 0

    def merge(self, other: "CountedMetric") -> None:
        self.distance_evals += other.distance_evals
        self.projection_evals += other.projection_evals
        self.angle_evals += other.angle_evals

    def as_dict(self) -> dict:
        return {
            "distance_evals": self.distance_evals,
            "projection_evals": self.projection_evals,
            "angle_evals": self.angle_evals,
            "total": self.total,
        }


def as_vector(x, dim: int | None = None) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionMismatch(f"expected a 1-d vector, got shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise DimensionMismatch(f"expected length {dim}, got {v.shape[0]}")
    return v


def _check_same(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[-1] != b.shape[-1]:
        raise DimensionMismatch(f"dimension mismatch: {a.shape[-1]} != {b.shape[-1]}")


def euclidean_distance(a, b, metric: CountedMetric | None = None) -> float:
    """Return ``||a - b||`` and charge one distance evaluation to ``metric``."""
    a = as_vector(a)
    b = as_vector(b)
    _check_same(a, b)
    if metric is not None:
        metric.distance_evals += 1
    diff = a - b
    return float(math.sqrt(diff @ diff))


def distances_to(q: np.ndarray, points: np.ndarray, metric: CountedMetric | None = None) -> np.ndarray:
    """Distances from ``q`` to each row of ``points``; charges one evaluation per row."""
    q = as_vector(q)
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise DimensionMismatch(f"expected a 2-d point matrix, got shape {points.shape}")
    _check_same(q, points)
    if metric is not None:
        metric.distance_evals += points.shape[0]
    diff = points - q
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def angle_to_normal(v, n) -> float:
    """Acute angle in ``[0, pi/2]`` between the line spanned by ``v`` and ``n``.

    The absolute value of the cosine folds antiparallel vectors onto
    parallel ones.
    """
    v = as_vector(v)
    n = as_vector(n)
    _check_same(v, n)
    nv = math.sqrt(v @ v)
    nn = math.sqrt(n @ n)
    if nv == 0.0 or nn == 0.0:
        raise DegenerateVector("angle undefined for a zero-norm vector")
    c = min(1.0, abs(float(v @ n)) / (nv * nn))
    return math.acos(c)


# vectors shorter than this fraction of the longest sample carry only rounding noise
DEGENERATE_REL_NORM = 1e-9


def project(points: np.ndarray, unit_normal: np.ndarray) -> np.ndarray:
    """Row-wise dot products, computed identically for one row or many."""
    return (np.asarray(points, dtype=np.float64) * unit_normal).sum(axis=-1)


def plane_angles(vectors: np.ndarray, unit_normal: np.ndarray) -> np.ndarray:
    """Angles between each row of ``vectors`` and the hyperplane with ``unit_normal``.

    This is ``pi/2 - angle_to_normal`` evaluated as ``arcsin(|v.n| / |v|)``.
    Zero (or rounding-level) rows yield NaN so callers can drop them.
    """
    norms = np.sqrt(np.einsum("ij,ij->i", vectors, vectors))
    dots = np.abs(vectors @ unit_normal)
    cutoff = DEGENERATE_REL_NORM * norms.max() if len(norms) else 0.0
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where((norms > cutoff) & (norms > 0), dots / norms, np.nan)
    return np.arcsin(np.minimum(s, 1.0))


def signed_margin(q, splitter, metric: CountedMetric | None = None) -> float:
    """``q . normal - threshold``; its magnitude is the distance from ``q`` to the splitter."""
    q = as_vector(q)
    _check_same(q, splitter.normal)
    if metric is not None:
        metric.projection_evals += 1
    return float(project(q, splitter.normal)) - splitter.threshold
