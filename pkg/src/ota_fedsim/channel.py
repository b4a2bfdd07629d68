"""Fading multiple-access channel: coefficient sampling and superposition.

Concurrent analog transmissions reach the receiver as a single weighted
sum: each agent's signal is scaled by an unknown positive coefficient and
the scaled signals add up. Coefficients are drawn independently across
agents and rounds from one configured distribution, using a substream
keyed by (experiment seed, round index) so any round can be replayed
without replaying the ones before it.

The receiver never observes individual coefficients. Aggregation weights
are recovered implicitly: transmitting the constant 1 through the same
round yields the coefficient sum, and the ratio of the two receptions is
the convex combination with weights ``alpha_i / sum(alpha)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from ota_fedsim.errors import ConfigError, InvariantViolation
from ota_fedsim.geometry import as_param_vec


@dataclass(frozen=True)
class UniformPositive:
    """Uniform on [lo, hi) with 0 < lo <= hi."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi) and 0 < self.lo <= self.hi):
            raise ConfigError(f"uniform support needs 0 < lo <= hi, got [{self.lo}, {self.hi}]")

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.lo == self.hi:
            return np.full(n, self.lo)
        return rng.uniform(self.lo, self.hi, n)

    def mean(self) -> float:
        return 0.5 * (self.lo + self.hi)


@dataclass(frozen=True)
class Rayleigh:
    """Rayleigh-distributed magnitude with the given scale."""

    scale: float

    def __post_init__(self):
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise ConfigError(f"Rayleigh scale must be positive, got {self.scale}")

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.rayleigh(self.scale, n)

    def mean(self) -> float:
        return self.scale * math.sqrt(math.pi / 2.0)


@dataclass(frozen=True)
class LogNormal:
    """exp of a normal with the given log-space mean and deviation."""

    mu_log: float
    sigma_log: float

    def __post_init__(self):
        if not (math.isfinite(self.mu_log) and math.isfinite(self.sigma_log) and self.sigma_log > 0):
            raise ConfigError(f"lognormal needs finite mu_log and sigma_log > 0, got ({self.mu_log}, {self.sigma_log})")

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.lognormal(self.mu_log, self.sigma_log, n)

    def mean(self) -> float:
        return math.exp(self.mu_log + 0.5 * self.sigma_log**2)


Distribution = Union[UniformPositive, Rayleigh, LogNormal]

DEFAULT_DISTRIBUTION = UniformPositive(0.5, 1.5)


@dataclass(frozen=True)
class FadingRound:
    """Coefficients applied by the channel during one communication round."""

    alphas: np.ndarray
    k: int

    def __post_init__(self):
        a = np.asarray(self.alphas, dtype=np.float64)
        if a.ndim != 1 or a.size < 1:
            raise InvariantViolation("a fading round needs at least one coefficient")
        # one pass: NaN fails the first comparison, +/-inf fail one of the two
        if not np.all((a > 0) & (a < np.inf)):
            raise InvariantViolation("channel coefficients must be strictly positive and finite")
        if self.k < 0:
            raise InvariantViolation(f"round index must be nonnegative, got {self.k}")
        object.__setattr__(self, "alphas", a)

    @property
    def n_agents(self) -> int:
        return self.alphas.size


@dataclass(frozen=True)
class ChannelModel:
    """Coefficient distribution plus the experiment-level seed."""

    dist: Distribution = field(default_factory=lambda: DEFAULT_DISTRIBUTION)
    seed: int = 0


def sample_round(model: ChannelModel, n_agents: int, k: int) -> FadingRound:
    """Draw the round-k coefficients for ``n_agents`` transmitters.

    Deterministic in (model.seed, k, n_agents): the generator is seeded
    from the pair, so rounds are mutually independent streams.
    """
    if n_agents < 1:
        raise ValueError(f"need at least one agent, got {n_agents}")
    if k < 0:
        raise ValueError(f"round index must be nonnegative, got {k}")
    rng = np.random.default_rng([model.seed, k])
    alphas = model.dist.draw(rng, n_agents)
    # zero draws have measure zero but would break positivity; redraw them
    while np.any(alphas <= 0):
        bad = alphas <= 0
        alphas[bad] = model.dist.draw(rng, int(bad.sum()))
    return FadingRound(alphas=alphas, k=k)


def superpose(signals: Sequence[np.ndarray], rnd: FadingRound) -> np.ndarray:
    """Received vector: coefficient-weighted sum in fixed agent order."""
    if len(signals) != rnd.n_agents:
        raise ValueError(f"{len(signals)} signals but {rnd.n_agents} coefficients")
    first = as_param_vec(signals[0])
    acc = rnd.alphas[0] * first
    for i in range(1, rnd.n_agents):
        acc = acc + rnd.alphas[i] * as_param_vec(signals[i], dim=first.size)
    return acc


def superpose_scalar(values: Sequence[float], rnd: FadingRound) -> float:
    """Received scalar: coefficient-weighted sum of per-agent scalars."""
    if len(values) != rnd.n_agents:
        raise ValueError(f"{len(values)} values but {rnd.n_agents} coefficients")
    acc = 0.0
    for i in range(rnd.n_agents):
        acc += rnd.alphas[i] * float(values[i])
    return acc


def normalized_weights(rnd: FadingRound) -> np.ndarray:
    """Aggregation weights ``alpha_i / sum(alpha)``: positive, summing to 1."""
    total = float(np.sum(rnd.alphas))
    if total <= 0:
        raise InvariantViolation("coefficient sum must be positive")
    return rnd.alphas / total
