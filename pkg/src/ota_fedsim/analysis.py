"""Convergence metrics and numerical verification of the error bound.

For the diminishing step ``eta(k) = eta_c / sqrt(k+1)`` and a strong
convexity modulus ``mu``, the per-round contraction factor is
``C_k = 1 - eta(k) * mu``. The expected squared distance to the optimum
obeys the one-step recursion

    E[d(k+1)^2] <= C_k * E[d(k)^2] + eta(k)^2 * M^2,

whose unrolled form is an envelope made of a product-decay term and a
nested-product series. This module evaluates every such quantity two ways
(closed form in log-space and direct iteration), checks the classical
decay inequalities, and compares the envelope against Monte-Carlo
trajectories of the over-the-air protocol on quadratic costs.

Products and powers are evaluated in log-space: ``(C_k)^k`` underflows
64-bit floats near k ~ 1e4 for moderate ``eta_c * mu``.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ota_fedsim.errors import ConfigError, InvariantViolation
from ota_fedsim.geometry import ConstraintSet, as_param_vec

EPSILON_FLOOR = -300.0  # serialization cap standing in for -inf

_ASSERT_SLACK = 1e-12  # relative head-room for float round-off in exact inequalities


def worker_count() -> int:
    """Worker cap for seed fan-out, from OTA_FEDSIM_THREADS (default: all cores)."""
    raw = os.environ.get("OTA_FEDSIM_THREADS", "").strip()
    if raw:
        n = int(raw)
        if n < 1:
            raise ConfigError(f"OTA_FEDSIM_THREADS must be >= 1, got {n}")
        return n
    return os.cpu_count() or 1


def epsilon_metric(theta_k, theta_0, theta_d) -> float:
    """Contraction exponent ``log10(||theta_k - theta_d|| / ||theta_0 - theta_d||)``.

    Zero at k = 0 by construction, negative once the iterate is closer to
    the reference optimum than the initial point. Clamped at -300 so an
    exact hit on the optimum stays serializable.
    """
    tk = as_param_vec(theta_k)
    t0 = as_param_vec(theta_0, dim=tk.size)
    td = as_param_vec(theta_d, dim=tk.size)
    den = float(np.linalg.norm(t0 - td))
    if den == 0.0:
        raise ValueError("initial point coincides with the reference optimum")
    num = float(np.linalg.norm(tk - td))
    if num == 0.0:
        return EPSILON_FLOOR
    return max(math.log10(num / den), EPSILON_FLOOR)


@dataclass(frozen=True)
class BoundParams:
    """Inputs of the expected-error envelope.

    ``eta_c`` scales the diminishing step, ``mu`` is the strong-convexity
    modulus, ``grad_bound`` a sup of local gradient norms over the set,
    ``init_sq_err`` the squared initial distance to the optimum.
    Requires ``eta_c * mu <= 1`` so every contraction factor is
    nonnegative.
    """

    eta_c: float
    mu: float
    grad_bound: float
    init_sq_err: float

    def __post_init__(self):
        if self.eta_c <= 0 or self.mu <= 0:
            raise ValueError(f"eta_c and mu must be positive, got {self.eta_c}, {self.mu}")
        if self.eta_c * self.mu > 1.0 + 1e-12:
            raise ValueError(
                f"eta_c * mu = {self.eta_c * self.mu:.6g} exceeds 1; "
                "the diminishing-step analysis requires eta_c <= 1/L <= 1/mu"
            )
        if self.grad_bound < 0 or self.init_sq_err < 0:
            raise ValueError("grad_bound and init_sq_err must be nonnegative")

    def eta(self, k: int) -> float:
        return self.eta_c / math.sqrt(k + 1.0)


@dataclass
class BoundSeries:
    """Envelope pieces for k = 0..k_max (arrays of length k_max + 1)."""

    k_max: int
    product_terms: np.ndarray  # prod_{t<k} C_t
    series_terms: np.ndarray  # nested-product step-size series
    envelope: np.ndarray  # product * init_sq_err + grad_bound^2 * series


def contraction(k: int, p: BoundParams) -> float:
    """C_k = 1 - eta(k) * mu; in [0, 1) for k >= 0, positive for k >= 1."""
    return 1.0 - p.eta(k) * p.mu


def _log_contractions(p: BoundParams, k_max: int) -> np.ndarray:
    """log(C_k) for k = 0..k_max; C_0 may be exactly 0 (mapped to -inf)."""
    ks = np.arange(k_max + 1, dtype=np.float64)
    x = (p.eta_c * p.mu) / np.sqrt(ks + 1.0)
    with np.errstate(divide="ignore"):
        return np.log1p(-x)


def _eta_sq(p: BoundParams, k_max: int) -> np.ndarray:
    ks = np.arange(k_max + 1, dtype=np.float64)
    return (p.eta_c / np.sqrt(ks + 1.0)) ** 2


def check_lemma4(p: BoundParams, k_max: int) -> list[tuple[int, float, float]]:
    """Power decay: ``0 <= (C_k)^k <= exp(-Q k / sqrt(k+1))`` with Q = eta_c*mu.

    Returns (k, power, bound) for every k up to k_max, raising if the
    sandwich fails anywhere. Powers are formed in log-space; k = 0 is the
    empty product 1.
    """
    if k_max < 1:
        raise ValueError(f"k_max must be >= 1, got {k_max}")
    q = p.eta_c * p.mu
    logc = _log_contractions(p, k_max)
    ks = np.arange(k_max + 1, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        powers = np.exp(ks * logc)
    powers[0] = 1.0  # empty power, even when C_0 = 0
    bounds = np.exp(-q * ks / np.sqrt(ks + 1.0))
    if np.any(powers < 0) or np.any(powers > bounds * (1.0 + _ASSERT_SLACK)):
        worst = int(np.argmax(powers - bounds))
        raise InvariantViolation(
            f"power decay violated at k={worst}: {powers[worst]!r} > {bounds[worst]!r}"
        )
    return [(int(k), float(v), float(b)) for k, v, b in zip(ks, powers, bounds)]


def check_lemma5(p: BoundParams, threshold: float, k_max: int) -> Optional[int]:
    """First k with ``prod_{t<=k} C_t < threshold``, or None if not reached.

    Also checks the running product against ``exp(-mu * sum_{t<=k} eta(t))``
    at every k.
    """
    if not (0.0 < threshold < 1.0):
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    logc = _log_contractions(p, k_max)
    log_products = np.cumsum(logc)
    etas = np.sqrt(_eta_sq(p, k_max))
    log_bounds = -p.mu * np.cumsum(etas)
    products = np.exp(log_products)
    if np.any(products > np.exp(log_bounds) * (1.0 + _ASSERT_SLACK)):
        raise InvariantViolation("running product exceeds its exponential bound")
    below = np.nonzero(products < threshold)[0]
    return int(below[0]) if below.size else None


def appendix_series(p: BoundParams, k: int) -> float:
    """Step-size series with exact nested products,

        sum_{t=0}^{k-2} (prod_{l=t+1}^{k-1} C_l) eta(t)^2  +  eta(k-1)^2,

    evaluated through prefix sums of log C_l (indices l >= 1, where C_l is
    strictly positive). k = 1 gives the bare ``eta(0)^2`` term.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    eta_sq = _eta_sq(p, k - 1)
    if k == 1:
        return float(eta_sq[0])
    logc = _log_contractions(p, k - 1)
    # prefix[j] = sum_{l=1}^{j} log C_l; the series never touches C_0
    prefix = np.concatenate([[0.0], np.cumsum(logc[1:])])
    t = np.arange(k - 1)
    tail_products = np.exp(prefix[k - 1] - prefix[t])
    return float(tail_products @ eta_sq[t] + eta_sq[k - 1])


def appendix_series_loose(p: BoundParams, k: int) -> float:
    """Single-base upper bound ``sum_{t=0}^{k-1} (C_{k-1})^{k-t-1} eta(t)^2``."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    eta_sq = _eta_sq(p, k - 1)
    if k == 1:
        return float(eta_sq[0])
    log_base = math.log(contraction(k - 1, p))
    expo = k - 1 - np.arange(k, dtype=np.float64)
    return float(np.exp(expo * log_base) @ eta_sq)


def appendix_tail_bound(p: BoundParams, k: int, k0: int) -> float:
    """Asymptotic cap on the series: early-chunk decay plus ``eta(k0)/mu``.

    For k > k0 + 1 the series is at most
    ``eta(0)^2 (k0+1) (C_{k-1})^{k-1-k0} + eta(k0)/mu``; the first piece
    vanishes as k grows, the second is made small by choosing k0 late.
    """
    if k0 < 1 or k <= k0 + 1:
        raise ValueError(f"need 1 <= k0 and k > k0 + 1, got k0={k0}, k={k}")
    log_base = math.log(contraction(k - 1, p))
    early = p.eta(0) ** 2 * (k0 + 1) * math.exp((k - 1 - k0) * log_base)
    return early + p.eta(k0) / p.mu


def error_envelope(p: BoundParams, k_max: int) -> BoundSeries:
    """Closed-form envelope on the expected squared distance, k = 0..k_max.

    ``envelope[k] = (prod_{t<k} C_t) * init_sq_err + grad_bound^2 * series[k]``
    with the nested-product series of :func:`appendix_series`. Matches the
    one-step recursion of :func:`envelope_recursion` to rounding error.
    """
    if k_max < 0:
        raise ValueError(f"k_max must be >= 0, got {k_max}")
    logc = _log_contractions(p, max(k_max, 1))
    log_prod = np.concatenate([[0.0], np.cumsum(logc)])[: k_max + 1]
    products = np.exp(log_prod)

    series = np.zeros(k_max + 1)
    if k_max >= 1:
        eta_sq = _eta_sq(p, k_max - 1)
        prefix = np.concatenate([[0.0], np.cumsum(logc[1:])])
        series[1] = eta_sq[0]
        for k in range(2, k_max + 1):
            t = np.arange(k - 1)
            series[k] = np.exp(prefix[k - 1] - prefix[t]) @ eta_sq[t] + eta_sq[k - 1]

    envelope = products * p.init_sq_err + p.grad_bound**2 * series
    return BoundSeries(k_max=k_max, product_terms=products, series_terms=series, envelope=envelope)


def envelope_recursion(p: BoundParams, k_max: int) -> np.ndarray:
    """Same envelope by iterating ``e <- C_k e + eta(k)^2 M^2`` from init_sq_err."""
    out = np.empty(k_max + 1)
    out[0] = p.init_sq_err
    msq = p.grad_bound**2
    for k in range(k_max):
        out[k + 1] = contraction(k, p) * out[k] + p.eta(k) ** 2 * msq
    return out


# ---------------------------------------------------------------------------
# Monte-Carlo envelope dominance
# ---------------------------------------------------------------------------


@dataclass
class DominanceReport:
    """Outcome of comparing Monte-Carlo error curves against the envelope."""

    params: BoundParams
    n_seeds: int
    k_max: int
    empirical_mse: np.ndarray
    bounds: BoundSeries
    dominance_ok: bool
    recursion_ok: bool
    worst_ratio: float

    @property
    def passed(self) -> bool:
        return self.dominance_ok and self.recursion_ok

    def rows(self) -> list[dict]:
        return [
            {
                "k": k,
                "empirical_mse": float(self.empirical_mse[k]),
                "envelope": float(self.bounds.envelope[k]),
                "product_term": float(self.bounds.product_terms[k]),
                "series_term": float(self.bounds.series_terms[k]),
            }
            for k in range(self.k_max + 1)
        ]


def write_bound_report_csv(report: DominanceReport, path) -> None:
    lines = ["k,empirical_mse,envelope,product_term,series_term"]
    for row in report.rows():
        lines.append(
            f"{row['k']},{row['empirical_mse']:.17g},{row['envelope']:.17g},"
            f"{row['product_term']:.17g},{row['series_term']:.17g}"
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def verify_envelope_dominance(
    quad_losses: Sequence,
    cset: ConstraintSet,
    dist,
    theta0,
    *,
    n_seeds: int = 500,
    k_max: int = 200,
    slack: float = 0.05,
    base_channel_seed: int = 0,
    eta_c: float | None = None,
) -> DominanceReport:
    """Run the over-the-air protocol on quadratic costs across many channel
    seeds and check the mean squared distance against the envelope.

    Quadratic costs make every constant exact (mu = L = 1, gradient bound
    from the set geometry), so the comparison has no estimation slack
    beyond the Monte-Carlo error covered by ``slack``. Seeds fan out over
    a thread pool capped by OTA_FEDSIM_THREADS; per-seed curves are
    averaged in seed order, so the result is thread-count independent.
    """
    # imported here: protocols depends on this module for the epsilon metric
    from ota_fedsim import protocols
    from ota_fedsim.channel import ChannelModel, sample_round
    from ota_fedsim.losses import QuadraticLoss, combine_constants, estimate_constants

    if len(quad_losses) == 0:
        raise ValueError("need at least one local cost")
    if not all(isinstance(sp, QuadraticLoss) for sp in quad_losses):
        raise ConfigError("envelope verification requires quadratic losses (exact constants)")
    if n_seeds < 1 or k_max < 1:
        raise ValueError("need n_seeds >= 1 and k_max >= 1")

    consts = combine_constants([estimate_constants(sp, cset) for sp in quad_losses])
    if eta_c is None:
        eta_c = 1.0 / consts.lip
    if eta_c * consts.mu > 1.0 + 1e-12:
        raise ConfigError(
            f"eta_c * mu = {eta_c * consts.mu:.6g} exceeds 1: the error-bound analysis "
            "requires the step scale to stay at or below 1/L"
        )
    sched = protocols.DiminishingSqrt(eta_c=eta_c)
    theta0 = as_param_vec(theta0)
    if not cset.contains(theta0):
        raise ValueError("theta0 must lie in the constraint set")

    theta_star = protocols.centralized_fit(
        quad_losses, protocols.ConstantStep(eta=1.0 / consts.lip), cset, max_iters=10_000, grad_tol=1e-10
    )
    init_sq = float(np.linalg.norm(theta0 - theta_star) ** 2)
    params = BoundParams(eta_c=eta_c, mu=consts.mu, grad_bound=consts.grad_bound, init_sq_err=init_sq)

    n_agents = len(quad_losses)

    def one_seed(s: int) -> np.ndarray:
        chan = ChannelModel(dist=dist, seed=base_channel_seed + s)
        theta = theta0.copy()
        sq = np.empty(k_max + 1)
        sq[0] = init_sq
        for k in range(k_max):
            rnd = sample_round(chan, n_agents, k)
            theta, _ = protocols.fedcota_step(theta, k, quad_losses, sched, cset, rnd)
            d = theta - theta_star
            sq[k + 1] = float(d @ d)
        return sq

    workers = min(worker_count(), n_seeds)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            curves = list(pool.map(one_seed, range(n_seeds)))
    else:
        curves = [one_seed(s) for s in range(n_seeds)]

    total = np.zeros(k_max + 1)
    for curve in curves:  # fixed seed order keeps the sum deterministic
        total += curve
    empirical = total / n_seeds

    bounds = error_envelope(params, k_max)
    allowed = bounds.envelope * (1.0 + slack) + 1e-12
    dominance_ok = bool(np.all(empirical <= allowed))
    ratios = empirical / np.maximum(bounds.envelope, 1e-300)
    worst_ratio = float(ratios.max())

    recursion_ok = True
    msq = params.grad_bound**2
    for k in range(k_max):
        rhs = contraction(k, params) * empirical[k] + params.eta(k) ** 2 * msq
        if empirical[k + 1] > rhs * (1.0 + slack) + 1e-12:
            recursion_ok = False
            break

    return DominanceReport(
        params=params,
        n_seeds=n_seeds,
        k_max=k_max,
        empirical_mse=empirical,
        bounds=bounds,
        dominance_ok=dominance_ok,
        recursion_ok=recursion_ok,
        worst_ratio=worst_ratio,
    )
