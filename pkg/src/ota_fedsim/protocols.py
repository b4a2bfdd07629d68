"""Training procedures: over-the-air rounds, TDMA averaging, and the
centralized projected-gradient oracle, plus the deterministic experiment
runner.

One over-the-air round costs two transmission slots regardless of the
number of agents: every agent simultaneously sends its locally updated
vector, then the constant 1. The server sees only the two superposed
receptions and recovers a convex combination of the local updates as
their ratio; it never observes individual coefficients or local vectors.
The TDMA baseline transmits each agent's vector in its own slot (N slots
per round) and averages.

``server_update`` is the single aggregation path and takes nothing but
the two received signals and the constraint set, which enforces the
information barrier structurally.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from ota_fedsim import analysis
from ota_fedsim import data as data_mod
from ota_fedsim.channel import ChannelModel, FadingRound, sample_round, superpose, superpose_scalar
from ota_fedsim.config import ExperimentConfig
from ota_fedsim.errors import InvariantViolation
from ota_fedsim.geometry import Box, ConstraintSet, L2Ball, as_param_vec, project
from ota_fedsim.losses import (
    CurvatureConstants,
    LogisticLoss,
    LossSpec,
    QuadraticLoss,
    combine_constants,
    estimate_constants,
    global_gradient,
    global_loss,
    loss_gradient,
)

FEDCOTA_SLOTS_PER_ROUND = 2

# data-generation conventions for logistic runs (the config schema is closed,
# so these are fixed rather than configurable); the class overlap keeps the
# regularized optimum well inside the ball and the fit well conditioned
BLOB_CENTER_OFFSET = 1.0
BLOB_SIGMA = 1.5


class StepScaleWarning(UserWarning):
    """The configured step scale exceeds 1/L; bound analysis does not apply."""


class NonConvergenceWarning(UserWarning):
    """The centralized fit hit its iteration cap before the tolerance."""


@dataclass(frozen=True)
class DiminishingSqrt:
    """eta(k) = eta_c / sqrt(k+1): decreasing, vanishing, divergent sum."""

    eta_c: float

    def __post_init__(self):
        if not (math.isfinite(self.eta_c) and self.eta_c > 0):
            raise ValueError(f"eta_c must be positive, got {self.eta_c}")

    def at(self, k: int) -> float:
        return self.eta_c / math.sqrt(k + 1.0)


@dataclass(frozen=True)
class ConstantStep:
    eta: float

    def __post_init__(self):
        if not (math.isfinite(self.eta) and self.eta > 0):
            raise ValueError(f"step must be positive, got {self.eta}")

    def at(self, k: int) -> float:
        return self.eta


StepSchedule = Union[DiminishingSqrt, ConstantStep]


@dataclass
class FedState:
    """Server-side state: round counter, current iterate, slots consumed."""

    k: int
    theta: np.ndarray
    slots_used: int = 0


@dataclass
class RoundTrace:
    """Audit record of one round; never feeds back into the computation."""

    k: int
    theta_after: np.ndarray
    epsilon: float
    global_loss: float
    slots_used: int
    alphas: np.ndarray = field(default_factory=lambda: np.empty(0))


def server_update(theta_rec: np.ndarray, rho_rec: float, cset: ConstraintSet) -> np.ndarray:
    """Aggregate from the two received signals alone: project their ratio.

    This function is the only aggregation path; keeping its inputs to the
    superposed receptions (plus the set) means no caller can leak channel
    coefficients or individual local vectors into the server iterate.
    """
    if rho_rec <= 0.0:
        raise InvariantViolation(
            f"received scalar sum must be positive, got {rho_rec!r}; "
            "positive channel coefficients cannot produce this"
        )
    return project(cset, theta_rec / rho_rec)


def local_updates(theta: np.ndarray, k: int, losses: Sequence[LossSpec], sched: StepSchedule) -> list[np.ndarray]:
    """One local gradient step per agent from the broadcast iterate."""
    eta = sched.at(k)
    return [theta - eta * loss_gradient(spec, theta) for spec in losses]


def fedcota_step(
    theta: np.ndarray,
    k: int,
    losses: Sequence[LossSpec],
    sched: StepSchedule,
    cset: ConstraintSet,
    rnd: FadingRound,
) -> tuple[np.ndarray, np.ndarray]:
    """Advance one over-the-air round with the given fading realization.

    Returns the next iterate and the coefficients (for auditing only).
    """
    locals_ = local_updates(theta, k, losses, sched)
    theta_rec = superpose(locals_, rnd)
    rho_rec = superpose_scalar([1.0] * len(losses), rnd)
    return server_update(theta_rec, rho_rec, cset), rnd.alphas


def fedcota_round(
    state: FedState,
    losses: Sequence[LossSpec],
    sched: StepSchedule,
    cset: ConstraintSet,
    channel: ChannelModel,
) -> tuple[FedState, RoundTrace]:
    """One over-the-air round: local steps, two superposed transmissions,
    ratio-and-project server update. Consumes exactly two slots."""
    rnd = sample_round(channel, len(losses), state.k)
    theta_next, alphas = fedcota_step(state.theta, state.k, losses, sched, cset, rnd)
    new_state = FedState(k=state.k + 1, theta=theta_next, slots_used=state.slots_used + FEDCOTA_SLOTS_PER_ROUND)
    trace = RoundTrace(
        k=new_state.k,
        theta_after=theta_next,
        epsilon=float("nan"),
        global_loss=global_loss(losses, theta_next),
        slots_used=new_state.slots_used,
        alphas=alphas,
    )
    return new_state, trace


def fedavg_round(
    state: FedState,
    losses: Sequence[LossSpec],
    sched: StepSchedule,
    cset: ConstraintSet,
) -> tuple[FedState, RoundTrace]:
    """One TDMA round: each agent transmits in its own slot, the server
    projects the plain average. Consumes N slots."""
    n = len(losses)
    locals_ = local_updates(state.theta, state.k, losses, sched)
    acc = locals_[0].copy()
    for vec in locals_[1:]:
        acc = acc + vec
    theta_next = project(cset, acc / n)
    new_state = FedState(k=state.k + 1, theta=theta_next, slots_used=state.slots_used + n)
    trace = RoundTrace(
        k=new_state.k,
        theta_after=theta_next,
        epsilon=float("nan"),
        global_loss=global_loss(losses, theta_next),
        slots_used=new_state.slots_used,
    )
    return new_state, trace


def centralized_fit(
    losses: Sequence[LossSpec],
    sched: StepSchedule,
    cset: ConstraintSet,
    *,
    max_iters: int = 200_000,
    grad_tol: float = 1e-8,
    theta0=None,
) -> np.ndarray:
    """Projected gradient descent on the averaged cost over the full data.

    Stops when the gradient norm falls below ``grad_tol`` (interior
    optimum) or when an iteration moves less than ``grad_tol`` times the
    step (projected fixed point, the constrained optimality condition).
    Hitting ``max_iters`` returns the last iterate with a warning.
    """
    if max_iters < 1 or grad_tol <= 0:
        raise ValueError("need max_iters >= 1 and grad_tol > 0")
    dim = losses[0].dim if hasattr(losses[0], "dim") else as_param_vec(theta0).size
    theta = project(cset, np.zeros(dim)) if theta0 is None else project(cset, as_param_vec(theta0, dim=dim))
    for t in range(max_iters):
        grad = global_gradient(losses, theta)
        if float(np.linalg.norm(grad)) < grad_tol:
            return theta
        step = sched.at(t)
        theta_next = project(cset, theta - step * grad)
        if float(np.linalg.norm(theta_next - theta)) <= grad_tol * step:
            return theta_next
        theta = theta_next
    warnings.warn(
        f"projected gradient descent did not reach tolerance {grad_tol:g} "
        f"within {max_iters} iterations; returning the last iterate",
        NonConvergenceWarning,
        stacklevel=2,
    )
    return theta


# ---------------------------------------------------------------------------
# Experiment runner
# ---------------------------------------------------------------------------


@dataclass
class PreparedExperiment:
    """Everything a run needs, fixed before the first round."""

    config: ExperimentConfig
    cset: ConstraintSet
    local_losses: list[LossSpec]
    central_losses: list[LossSpec]
    constants: CurvatureConstants
    sched: DiminishingSqrt
    theta0: np.ndarray
    theta_d: np.ndarray
    channel: ChannelModel


def quadratic_targets(config: ExperimentConfig, cset: ConstraintSet) -> list[np.ndarray]:
    """Per-agent targets drawn from a shrunken copy of the constraint set,
    so their mean is always interior."""
    rng = np.random.default_rng(config.seeds.data)
    if isinstance(cset, L2Ball):
        inner = L2Ball(radius=cset.radius / 2.0)
        return [inner.sample(rng, config.m) for _ in range(config.n_agents)]
    center = (cset.lower + cset.upper) / 2.0
    quarter = (cset.upper - cset.lower) / 4.0
    inner_box = Box(lower=center - quarter, upper=center + quarter)
    return [inner_box.sample(rng) for _ in range(config.n_agents)]


def prepare_experiment(config: ExperimentConfig) -> PreparedExperiment:
    """Build losses, constants, schedule, initial point and the reference
    optimum for a config. Deterministic given the config's seeds."""
    cset = config.build_constraint()

    if config.loss == "logistic":
        total = config.n_agents * config.samples_per_agent
        n_one = total // 2
        offset = np.zeros(config.m - 1)
        offset[0] = BLOB_CENTER_OFFSET
        ds = data_mod.generate_gaussian_blobs(
            dim=config.m,
            n_per_class=(total - n_one, n_one),
            centers=(-offset, offset),
            sigma=BLOB_SIGMA,
            seed=config.seeds.data,
        )
        part = data_mod.partition_iid(ds, config.n_agents, seed=config.seeds.data + 1)
        local = [LogisticLoss(config.lam, shard.features, shard.labels) for shard in part.shards]
        # equal shard sizes make the average of shard costs identical to the
        # single cost over the union, so the centralized fit uses one spec
        central: list[LossSpec] = [LogisticLoss(config.lam, ds.features, ds.labels)]
    else:
        targets = quadratic_targets(config, cset)
        local = [QuadraticLoss(t) for t in targets]
        central = list(local)

    constants = combine_constants([estimate_constants(spec, cset) for spec in local])
    eta_c = config.schedule.eta_c
    if eta_c is None:
        eta_c = min(1.0, 1.0 / constants.lip)
    elif eta_c > 1.0 / constants.lip * (1.0 + 1e-12):
        warnings.warn(
            f"step scale {eta_c:g} exceeds 1/L = {1.0 / constants.lip:g}; running anyway, "
            "but the expected-error bound does not cover this configuration",
            StepScaleWarning,
            stacklevel=2,
        )
    sched = DiminishingSqrt(eta_c=eta_c)

    theta0 = cset.sample(np.random.default_rng(config.seeds.init), config.m)
    theta_d = centralized_fit(
        central,
        ConstantStep(eta=min(1.0, 1.0 / constants.lip)),
        cset,
        max_iters=300_000,
        grad_tol=1e-6,
    )
    return PreparedExperiment(
        config=config,
        cset=cset,
        local_losses=local,
        central_losses=central,
        constants=constants,
        sched=sched,
        theta0=theta0,
        theta_d=theta_d,
        channel=config.build_channel(),
    )


def run_prepared(
    prep: PreparedExperiment,
    *,
    protocol: str | None = None,
    rounds: int | None = None,
    channel_seed: int | None = None,
) -> list[RoundTrace]:
    """Run the selected protocol from the prepared state and return the
    traces, row 0 being the initialization (epsilon = 0 by definition)."""
    proto = protocol or prep.config.protocol
    n_rounds = prep.config.rounds if rounds is None else rounds
    channel = prep.channel
    if channel_seed is not None:
        channel = ChannelModel(dist=channel.dist, seed=channel_seed)

    state = FedState(k=0, theta=prep.theta0.copy(), slots_used=0)
    traces = [
        RoundTrace(
            k=0,
            theta_after=prep.theta0.copy(),
            epsilon=analysis.epsilon_metric(prep.theta0, prep.theta0, prep.theta_d),
            global_loss=global_loss(prep.local_losses, prep.theta0),
            slots_used=0,
        )
    ]
    for _ in range(n_rounds):
        if proto == "fedcota":
            state, trace = fedcota_round(state, prep.local_losses, prep.sched, prep.cset, channel)
        elif proto == "fedavg":
            state, trace = fedavg_round(state, prep.local_losses, prep.sched, prep.cset)
        else:
            raise ValueError(f"unknown protocol {proto!r}")
        trace.epsilon = analysis.epsilon_metric(trace.theta_after, prep.theta0, prep.theta_d)
        traces.append(trace)
    return traces


def run_experiment(config: ExperimentConfig) -> list[RoundTrace]:
    """End-to-end run: data, reference optimum, K rounds, traces."""
    return run_prepared(prepare_experiment(config))


def run_comparison(config: ExperimentConfig) -> tuple[list[RoundTrace], list[RoundTrace]]:
    """Both protocols from identical data, initial state and seeds."""
    prep = prepare_experiment(config)
    return (
        run_prepared(prep, protocol="fedcota"),
        run_prepared(prep, protocol="fedavg"),
    )


def write_trace_csv(traces: Sequence[RoundTrace], path) -> None:
    """Trace contract: one row per round, floats at 17 significant digits."""
    dim = traces[0].theta_after.size
    header = ["k", "epsilon", "global_loss"] + [f"theta_{j}" for j in range(dim)] + ["slots_used"]
    lines = [",".join(header)]
    for tr in traces:
        cells = [str(tr.k), f"{tr.epsilon:.17g}", f"{tr.global_loss:.17g}"]
        cells += [f"{x:.17g}" for x in tr.theta_after]
        cells.append(str(tr.slots_used))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")
