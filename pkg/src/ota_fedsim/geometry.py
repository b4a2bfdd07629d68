"""Parameter vectors and exact projections onto convex constraint sets.

A parameter vector is a finite 1-D float64 numpy array. Two constraint-set
kinds are supported, both with closed-form nearest-point projections:

- :class:`L2Ball` -- radial scaling of exterior points,
- :class:`Box` -- componentwise clamping.

Both sets are nonempty, convex and compact by construction, so the
projection is single-valued, idempotent and non-expansive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

ParamVec = np.ndarray


def as_param_vec(x, dim: int | None = None) -> np.ndarray:
    """Coerce ``x`` to a finite 1-D float64 vector, optionally of length ``dim``."""
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1 or v.size < 1:
        raise ValueError(f"parameter vector must be 1-D and nonempty, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("parameter vector contains NaN or Inf")
    if dim is not None and v.size != dim:
        raise ValueError(f"dimension mismatch: expected {dim}, got {v.size}")
    return v


def norm(x) -> float:
    """Euclidean norm; zero iff ``x`` is the zero vector."""
    return float(np.linalg.norm(as_param_vec(x)))


@dataclass(frozen=True)
class L2Ball:
    """Closed Euclidean ball of given radius centered at the origin."""

    radius: float

    def __post_init__(self):
        if not (math.isfinite(self.radius) and self.radius > 0):
            raise ValueError(f"ball radius must be positive and finite, got {self.radius}")

    def project(self, x) -> np.ndarray:
        v = as_param_vec(x)
        r = float(np.linalg.norm(v))
        if r <= self.radius:
            return v.copy()
        return v * (self.radius / r)

    def contains(self, x, rtol: float = 1e-12) -> bool:
        return float(np.linalg.norm(as_param_vec(x))) <= self.radius * (1.0 + rtol)

    def diameter(self) -> float:
        return 2.0 * self.radius

    def sample(self, rng: np.random.Generator, dim: int) -> np.ndarray:
        """Uniform draw from the ball (direction times U^(1/dim)-scaled radius)."""
        direction = rng.standard_normal(dim)
        direction /= np.linalg.norm(direction)
        radius = self.radius * rng.uniform() ** (1.0 / dim)
        return direction * radius


class Box:
    """Axis-aligned box ``lower <= x <= upper`` (componentwise)."""

    def __init__(self, lower, upper):
        self.lower = as_param_vec(lower)
        self.upper = as_param_vec(upper, dim=self.lower.size)
        if np.any(self.lower > self.upper):
            raise ValueError("box lower bound exceeds upper bound in some coordinate")

    @property
    def dim(self) -> int:
        return self.lower.size

    def project(self, x) -> np.ndarray:
        v = as_param_vec(x, dim=self.dim)
        return np.clip(v, self.lower, self.upper)

    def contains(self, x, rtol: float = 1e-12) -> bool:
        v = as_param_vec(x, dim=self.dim)
        slack = rtol * np.maximum(1.0, np.abs(self.upper - self.lower))
        return bool(np.all(v >= self.lower - slack) and np.all(v <= self.upper + slack))

    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))

    def sample(self, rng: np.random.Generator, dim: int | None = None) -> np.ndarray:
        if dim is not None and dim != self.dim:
            raise ValueError(f"dimension mismatch: box is {self.dim}-dimensional, asked for {dim}")
        return rng.uniform(self.lower, self.upper)

    def __repr__(self):
        return f"Box(lower={self.lower.tolist()}, upper={self.upper.tolist()})"


ConstraintSet = Union[L2Ball, Box]


def project(cset: ConstraintSet, x) -> np.ndarray:
    """Nearest point of ``cset`` to ``x``; returns ``x`` unchanged when feasible."""
    return cset.project(x)


def sup_norm_over(cset: ConstraintSet) -> float:
    """Exact supremum of ``||theta||`` over the set."""
    if isinstance(cset, L2Ball):
        return cset.radius
    return float(np.sqrt(np.sum(np.maximum(cset.lower**2, cset.upper**2))))


def sup_distance_to(cset: ConstraintSet, point) -> float:
    """Exact supremum of ``||theta - point||`` over the set."""
    if isinstance(cset, L2Ball):
        return cset.radius + float(np.linalg.norm(as_param_vec(point)))
    p = as_param_vec(point, dim=cset.dim)
    worst = np.maximum((cset.lower - p) ** 2, (cset.upper - p) ** 2)
    return float(np.sqrt(np.sum(worst)))
