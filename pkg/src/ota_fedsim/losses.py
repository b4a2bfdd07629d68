"""Strongly convex local cost functions with exact gradients.

Two cost kinds:

- :class:`LogisticLoss` -- L2-regularized cross-entropy for binary labels,
  ``lam * ||theta||^2 - mean(z*log(S) + (1-z)*log(1-S))`` with the sigmoid
  ``S`` evaluated through log1p/softplus identities so large scores do not
  overflow.
- :class:`QuadraticLoss` -- ``0.5 * ||theta - target||^2``, an analytically
  solvable oracle with curvature constants exactly 1.

Curvature estimation returns certified constants: a strong-convexity
modulus, a gradient Lipschitz bound (sigmoid curvature is at most 1/4), a
gradient sup-bound over the constraint set and the set diameter.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from ota_fedsim import geometry
from ota_fedsim.geometry import ConstraintSet, as_param_vec


@dataclass(frozen=True)
class Sample:
    """One labeled example: features (bias coordinate last) and a 0/1 label."""

    features: np.ndarray
    label: int

    def __post_init__(self):
        object.__setattr__(self, "features", as_param_vec(self.features))
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")


@dataclass(frozen=True)
class CurvatureConstants:
    """Certified curvature data for one cost over one constraint set.

    ``mu`` is the strong-convexity modulus, ``lip`` the gradient Lipschitz
    constant, ``grad_bound`` a supremum of the gradient norm over the set,
    ``diam`` an upper bound on the distance to any feasible minimizer.
    """

    mu: float
    lip: float
    grad_bound: float
    diam: float

    def __post_init__(self):
        if not (0 < self.mu <= self.lip):
            raise ValueError(f"need 0 < mu <= lip, got mu={self.mu}, lip={self.lip}")
        if self.grad_bound <= 0 or self.diam <= 0:
            raise ValueError("grad_bound and diam must be positive")


class QuadraticLoss:
    """f(theta) = 0.5 * ||theta - target||^2; minimum 0 at the target."""

    def __init__(self, target):
        self.target = as_param_vec(target)

    @property
    def dim(self) -> int:
        return self.target.size

    def value(self, theta) -> float:
        d = as_param_vec(theta, dim=self.dim) - self.target
        return 0.5 * float(d @ d)

    def gradient(self, theta) -> np.ndarray:
        return as_param_vec(theta, dim=self.dim) - self.target

    def __repr__(self):
        return f"QuadraticLoss(target={self.target.tolist()})"


class LogisticLoss:
    """Regularized cross-entropy over a fixed dataset.

    Features are stored as an (n, m) matrix whose rows include the bias
    coordinate; labels are an n-vector of 0/1. The regularizer
    ``lam * ||theta||^2`` covers every coordinate, bias included.
    """

    def __init__(self, lam: float, features, labels):
        if not (0.0 <= lam <= 1.0):
            raise ValueError(f"regularization weight must lie in [0, 1], got {lam}")
        U = np.asarray(features, dtype=np.float64)
        z = np.asarray(labels, dtype=np.float64)
        if U.ndim != 2 or U.shape[0] < 1:
            raise ValueError("dataset must be a nonempty (n, m) feature matrix")
        if z.shape != (U.shape[0],):
            raise ValueError("labels must be a vector matching the number of samples")
        if not np.all(np.isin(z, (0.0, 1.0))):
            raise ValueError("labels must be 0 or 1")
        if not np.all(np.isfinite(U)):
            raise ValueError("features contain NaN or Inf")
        self.lam = float(lam)
        self.features = U
        self.labels = z

    @classmethod
    def from_samples(cls, lam: float, samples: Sequence[Sample]) -> "LogisticLoss":
        if len(samples) == 0:
            raise ValueError("dataset must be nonempty")
        U = np.stack([s.features for s in samples])
        z = np.array([s.label for s in samples], dtype=np.float64)
        return cls(lam, U, z)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    def value(self, theta) -> float:
        th = as_param_vec(theta, dim=self.dim)
        t = self.features @ th
        # -[z log S(t) + (1-z) log(1-S(t))] = z softplus(-t) + (1-z) softplus(t)
        ce = self.labels * np.logaddexp(0.0, -t) + (1.0 - self.labels) * np.logaddexp(0.0, t)
        return self.lam * float(th @ th) + float(np.mean(ce))

    def gradient(self, theta) -> np.ndarray:
        th = as_param_vec(theta, dim=self.dim)
        t = self.features @ th
        return 2.0 * self.lam * th + self.features.T @ (_sigmoid(t) - self.labels) / self.n_samples


LossSpec = Union[QuadraticLoss, LogisticLoss]


def _sigmoid(t: np.ndarray) -> np.ndarray:
    # branch on sign so exp never overflows
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    et = np.exp(t[~pos])
    out[~pos] = et / (1.0 + et)
    return out


def loss_value(spec: LossSpec, theta) -> float:
    return spec.value(theta)


def loss_gradient(spec: LossSpec, theta) -> np.ndarray:
    return spec.gradient(theta)


def global_loss(specs: Sequence[LossSpec], theta) -> float:
    """Unweighted average of the local costs."""
    if len(specs) == 0:
        raise ValueError("need at least one local cost")
    return sum(spec.value(theta) for spec in specs) / len(specs)


def global_gradient(specs: Sequence[LossSpec], theta) -> np.ndarray:
    if len(specs) == 0:
        raise ValueError("need at least one local cost")
    acc = specs[0].gradient(theta)
    for spec in specs[1:]:
        acc = acc + spec.gradient(theta)
    return acc / len(specs)


def top_eigenvalue(mat: np.ndarray, rtol: float = 1e-8, max_iters: int = 100_000) -> float:
    """Largest eigenvalue of a symmetric PSD matrix by power iteration."""
    m = mat.shape[0]
    rng = np.random.default_rng(0)
    v = rng.standard_normal(m)
    v /= np.linalg.norm(v)
    lam_old = 0.0
    for _ in range(max_iters):
        w = mat @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        lam = float(v @ (mat @ v))
        if abs(lam - lam_old) <= rtol * max(abs(lam), 1e-300):
            return lam
        lam_old = lam
    return lam_old


def estimate_constants(spec: LossSpec, cset: ConstraintSet) -> CurvatureConstants:
    """Certified curvature constants of ``spec`` over the compact set ``cset``.

    Quadratic costs are exact (mu = lip = 1). For logistic costs,
    mu = 2*lam, lip = 2*lam + lambda_max(U^T U)/(4n) via power iteration,
    and the gradient bound uses |S - z| <= 1.
    """
    if isinstance(spec, QuadraticLoss):
        return CurvatureConstants(
            mu=1.0,
            lip=1.0,
            grad_bound=geometry.sup_distance_to(cset, spec.target),
            diam=cset.diameter(),
        )
    if spec.lam == 0.0:
        raise ValueError("not strongly convex: logistic cost needs a positive regularization weight")
    gram = spec.features.T @ spec.features
    lip = 2.0 * spec.lam + top_eigenvalue(gram) / (4.0 * spec.n_samples)
    row_norms = np.linalg.norm(spec.features, axis=1)
    grad_bound = 2.0 * spec.lam * geometry.sup_norm_over(cset) + float(row_norms.max())
    return CurvatureConstants(
        mu=2.0 * spec.lam,
        lip=lip,
        grad_bound=grad_bound,
        diam=cset.diameter(),
    )


def combine_constants(constants: Sequence[CurvatureConstants]) -> CurvatureConstants:
    """Constants for the averaged global cost: mean curvature, sup bounds."""
    if len(constants) == 0:
        raise ValueError("need at least one set of constants")
    return CurvatureConstants(
        mu=sum(c.mu for c in constants) / len(constants),
        lip=sum(c.lip for c in constants) / len(constants),
        grad_bound=max(c.grad_bound for c in constants),
        diam=max(c.diam for c in constants),
    )
