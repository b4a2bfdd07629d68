"""FastAPI front-end wrapping the simulator.

Every endpoint is stateless pure compute: a request carries the full
experiment description (including seeds), the response carries the whole
result, and identical requests produce identical responses. The handler
functions are plain callables so the command-line client can invoke them
in-process without a running server.
"""

from __future__ import annotations

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, ConfigDict, Field

from ota_fedsim import analysis, data as data_mod, protocols
from ota_fedsim.config import ExperimentConfig
from ota_fedsim.errors import ConfigError
from ota_fedsim.losses import QuadraticLoss

_STRICT = ConfigDict(extra="forbid")


class TraceRow(BaseModel):
    model_config = _STRICT

    k: int
    epsilon: float
    global_loss: float
    theta: list[float]
    slots_used: int


class RunRequest(BaseModel):
    model_config = _STRICT

    config: ExperimentConfig


class RunResponse(BaseModel):
    model_config = _STRICT

    protocol: str
    rounds: int
    final_epsilon: float
    final_global_loss: float
    slots_used: int
    trace: list[TraceRow]


class CompareRequest(BaseModel):
    model_config = _STRICT

    config: ExperimentConfig


class CompareRow(BaseModel):
    model_config = _STRICT

    protocol: str
    k: int
    cumulative_slots: int
    epsilon: float
    global_loss: float


class CompareResponse(BaseModel):
    model_config = _STRICT

    rounds: int
    slots_per_round: dict[str, int]
    rows: list[CompareRow]


class VerifyBoundsRequest(BaseModel):
    model_config = _STRICT

    config: ExperimentConfig
    n_seeds: int = Field(default=500, ge=1)
    k_max: int = Field(default=200, ge=1)
    slack: float = Field(default=0.05, ge=0.0)


class CheckResult(BaseModel):
    model_config = _STRICT

    name: str
    passed: bool
    detail: str


class BoundRow(BaseModel):
    model_config = _STRICT

    k: int
    empirical_mse: float
    envelope: float
    product_term: float
    series_term: float


class VerifyBoundsResponse(BaseModel):
    model_config = _STRICT

    passed: bool
    eta_c: float
    mu: float
    grad_bound: float
    init_sq_err: float
    checks: list[CheckResult]
    rows: list[BoundRow]


class GenDataRequest(BaseModel):
    model_config = _STRICT

    m: int = Field(ge=2)
    n_per_class: int = Field(ge=1)
    center_distance: float = Field(default=2.0, gt=0.0)
    sigma: float = Field(default=1.5, gt=0.0)
    seed: int = 0


class GenDataResponse(BaseModel):
    model_config = _STRICT

    dim: int
    n_samples: int
    class_counts: tuple[int, int]
    features: list[list[float]]
    labels: list[int]


def _trace_rows(traces) -> list[TraceRow]:
    return [
        TraceRow(
            k=tr.k,
            epsilon=tr.epsilon,
            global_loss=tr.global_loss,
            theta=[float(x) for x in tr.theta_after],
            slots_used=tr.slots_used,
        )
        for tr in traces
    ]


def handle_run(req: RunRequest) -> RunResponse:
    traces = protocols.run_experiment(req.config)
    last = traces[-1]
    return RunResponse(
        protocol=req.config.protocol,
        rounds=req.config.rounds,
        final_epsilon=last.epsilon,
        final_global_loss=last.global_loss,
        slots_used=last.slots_used,
        trace=_trace_rows(traces),
    )


def handle_compare(req: CompareRequest) -> CompareResponse:
    cota, avg = protocols.run_comparison(req.config)
    rows = []
    for name, traces in (("fedcota", cota), ("fedavg", avg)):
        for tr in traces[1:]:  # per-round rows; the k = 0 row is initialization
            rows.append(
                CompareRow(
                    protocol=name,
                    k=tr.k,
                    cumulative_slots=tr.slots_used,
                    epsilon=tr.epsilon,
                    global_loss=tr.global_loss,
                )
            )
    return CompareResponse(
        rounds=req.config.rounds,
        slots_per_round={"fedcota": protocols.FEDCOTA_SLOTS_PER_ROUND, "fedavg": req.config.n_agents},
        rows=rows,
    )


def handle_verify_bounds(req: VerifyBoundsRequest) -> VerifyBoundsResponse:
    cfg = req.config
    if cfg.loss != "quadratic":
        raise ConfigError("bound verification runs on quadratic losses (their constants are exact)")
    cset = cfg.build_constraint()
    targets = protocols.quadratic_targets(cfg, cset)
    losses = [QuadraticLoss(t) for t in targets]
    theta0 = cset.sample(np.random.default_rng(cfg.seeds.init), cfg.m)
    report = analysis.verify_envelope_dominance(
        losses,
        cset,
        cfg.channel.build_distribution(),
        theta0,
        n_seeds=req.n_seeds,
        k_max=req.k_max,
        slack=req.slack,
        base_channel_seed=cfg.seeds.channel,
        eta_c=cfg.schedule.eta_c,
    )
    checks = [
        CheckResult(
            name="envelope_dominance",
            passed=report.dominance_ok,
            detail=f"max empirical/envelope ratio {report.worst_ratio:.6g} over k <= {req.k_max} "
            f"({req.n_seeds} seeds, slack {req.slack:g})",
        ),
        CheckResult(
            name="one_step_recursion",
            passed=report.recursion_ok,
            detail="per-round mean error vs contraction-plus-step bound",
        ),
    ]
    return VerifyBoundsResponse(
        passed=report.passed,
        eta_c=report.params.eta_c,
        mu=report.params.mu,
        grad_bound=report.params.grad_bound,
        init_sq_err=report.params.init_sq_err,
        checks=checks,
        rows=[BoundRow(**row) for row in report.rows()],
    )


def handle_gen_data(req: GenDataRequest) -> GenDataResponse:
    half = req.center_distance / 2.0
    offset = np.zeros(req.m - 1)
    offset[0] = half
    ds = data_mod.generate_gaussian_blobs(
        dim=req.m,
        n_per_class=(req.n_per_class, req.n_per_class),
        centers=(-offset, offset),
        sigma=req.sigma,
        seed=req.seed,
    )
    return GenDataResponse(
        dim=ds.dim,
        n_samples=ds.n_samples,
        class_counts=ds.class_counts(),
        features=[[float(x) for x in row] for row in ds.features],
        labels=[int(z) for z in ds.labels],
    )


app = FastAPI(
    title="ota-fedsim",
    description="Deterministic federated-learning simulator over a fading multiple-access channel",
    version="0.1.0",
)


def _run_handler(handler, req):
    try:
        return handler(req)
    except (ConfigError, ValueError) as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from None


@app.get("/health")
def health() -> dict:
    return {"status": "ok"}


@app.post("/run", response_model=RunResponse)
def run_endpoint(req: RunRequest) -> RunResponse:
    return _run_handler(handle_run, req)


@app.post("/compare", response_model=CompareResponse)
def compare_endpoint(req: CompareRequest) -> CompareResponse:
    return _run_handler(handle_compare, req)


@app.post("/verify-bounds", response_model=VerifyBoundsResponse)
def verify_bounds_endpoint(req: VerifyBoundsRequest) -> VerifyBoundsResponse:
    return _run_handler(handle_verify_bounds, req)


@app.post("/gen-data", response_model=GenDataResponse)
def gen_data_endpoint(req: GenDataRequest) -> GenDataResponse:
    return _run_handler(handle_gen_data, req)
