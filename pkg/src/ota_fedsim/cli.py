"""Command-line client for the simulator service.

Each subcommand builds a request model, sends it through the service
layer and writes/prints the result. By default the request is handled
in-process; ``--server URL`` sends it to a running instance over HTTP
instead (same models, same bytes out).

Exit codes: 0 success, 1 verification failure, 2 configuration/IO error.
Workers for seed fan-out are capped by the OTA_FEDSIM_THREADS variable.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click
import httpx

from ota_fedsim import data as data_mod, service
from ota_fedsim.config import ExperimentConfig, load_config
from ota_fedsim.errors import ConfigError, ParseError

EXIT_OK = 0
EXIT_VERIFY_FAIL = 1
EXIT_CONFIG = 2


class ServiceClient:
    """In-process by default; HTTP when a base URL is given."""

    def __init__(self, base_url: str | None = None, timeout: float = 600.0):
        self.base_url = base_url.rstrip("/") if base_url else None
        self.timeout = timeout

    def _post(self, path: str, req, response_model):
        if self.base_url is None:
            handler = {
                "/run": service.handle_run,
                "/compare": service.handle_compare,
                "/verify-bounds": service.handle_verify_bounds,
                "/gen-data": service.handle_gen_data,
            }[path]
            return handler(req)
        resp = httpx.post(
            self.base_url + path,
            json=req.model_dump(by_alias=True, exclude_none=True),
            timeout=self.timeout,
        )
        if resp.status_code != 200:
            raise ConfigError(f"server rejected {path}: {resp.status_code} {resp.text}")
        return response_model.model_validate(resp.json())

    def run(self, req: service.RunRequest) -> service.RunResponse:
        return self._post("/run", req, service.RunResponse)

    def compare(self, req: service.CompareRequest) -> service.CompareResponse:
        return self._post("/compare", req, service.CompareResponse)

    def verify_bounds(self, req: service.VerifyBoundsRequest) -> service.VerifyBoundsResponse:
        return self._post("/verify-bounds", req, service.VerifyBoundsResponse)

    def gen_data(self, req: service.GenDataRequest) -> service.GenDataResponse:
        return self._post("/gen-data", req, service.GenDataResponse)


def _fail_config(message: str):
    click.echo(message, err=True)
    sys.exit(EXIT_CONFIG)


def _load(config_path: str) -> ExperimentConfig:
    try:
        return load_config(config_path)
    except FileNotFoundError as exc:
        _fail_config(str(exc))
    except ConfigError as exc:
        _fail_config(f"invalid config: {exc}")


def _write_trace_csv(rows: list[service.TraceRow], path) -> None:
    dim = len(rows[0].theta)
    header = ["k", "epsilon", "global_loss"] + [f"theta_{j}" for j in range(dim)] + ["slots_used"]
    lines = [",".join(header)]
    for row in rows:
        cells = [str(row.k), f"{row.epsilon:.17g}", f"{row.global_loss:.17g}"]
        cells += [f"{x:.17g}" for x in row.theta]
        cells.append(str(row.slots_used))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


@click.group()
def main():
    """Federated learning over a fading multiple-access channel."""


@main.command("run")
@click.option("--config", "config_path", required=True, type=str, help="JSON experiment config.")
@click.option("--protocol", type=click.Choice(["fedcota", "fedavg"]), default=None, help="Override the protocol.")
@click.option("--rounds", type=int, default=None, help="Override the round count.")
@click.option("--seed-channel", type=int, default=None, help="Override the channel seed.")
@click.option("--out", "out_path", type=str, default=None, help="Trace CSV path (default: config output).")
@click.option("--server", type=str, default=None, help="Base URL of a running service.")
def cmd_run(config_path, protocol, rounds, seed_channel, out_path, server):
    """Run one experiment and write its round trace."""
    cfg = _load(config_path)
    updates = {}
    if protocol is not None:
        updates["protocol"] = protocol
    if rounds is not None:
        if rounds < 0:
            _fail_config(f"rounds must be nonnegative, got {rounds}")
        updates["rounds"] = rounds
    if seed_channel is not None:
        updates["seeds"] = cfg.seeds.model_copy(update={"channel": seed_channel})
    if updates:
        cfg = cfg.model_copy(update=updates)
    out = out_path or cfg.output
    if out is None:
        _fail_config("no output path: pass --out or set 'output' in the config")

    try:
        resp = ServiceClient(server).run(service.RunRequest(config=cfg))
        _write_trace_csv(resp.trace, out)
    except (ConfigError, ValueError, OSError) as exc:
        _fail_config(str(exc))
    click.echo(f"protocol: {resp.protocol}  rounds: {resp.rounds}")
    click.echo(f"final epsilon: {resp.final_epsilon:.6g}")
    click.echo(f"final global loss: {resp.final_global_loss:.6g}")
    click.echo(f"slots used: {resp.slots_used}")
    click.echo(f"trace written to {out}")


@main.command("compare")
@click.option("--config", "config_path", required=True, type=str)
@click.option("--out", "out_path", type=str, default=None, help="Joint CSV path (default: config output).")
@click.option("--server", type=str, default=None)
def cmd_compare(config_path, out_path, server):
    """Run both protocols from identical state; emit a slot-keyed CSV."""
    cfg = _load(config_path)
    out = out_path or cfg.output
    if out is None:
        _fail_config("no output path: pass --out or set 'output' in the config")
    try:
        resp = ServiceClient(server).compare(service.CompareRequest(config=cfg))
        lines = ["protocol,k,cumulative_slots,epsilon,global_loss"]
        for row in resp.rows:
            lines.append(
                f"{row.protocol},{row.k},{row.cumulative_slots},{row.epsilon:.17g},{row.global_loss:.17g}"
            )
        Path(out).write_text("\n".join(lines) + "\n")
    except (ConfigError, ValueError, OSError) as exc:
        _fail_config(str(exc))
    for name, slots in resp.slots_per_round.items():
        click.echo(f"{name}: {slots} slots/round, {resp.rounds} rounds")
    click.echo(f"comparison written to {out}")


@main.command("verify-bounds")
@click.option("--config", "config_path", required=True, type=str)
@click.option("--seeds", "n_seeds", type=int, default=500, show_default=True, help="Monte-Carlo channel seeds.")
@click.option("--k-max", type=int, default=200, show_default=True)
@click.option("--slack", type=float, default=0.05, show_default=True, help="Relative Monte-Carlo head-room.")
@click.option("--out", "out_path", type=str, default=None, help="Optional bound-report CSV.")
@click.option("--server", type=str, default=None)
def cmd_verify_bounds(config_path, n_seeds, k_max, slack, out_path, server):
    """Check Monte-Carlo error curves against the expected-error envelope."""
    cfg = _load(config_path)
    try:
        resp = ServiceClient(server).verify_bounds(
            service.VerifyBoundsRequest(config=cfg, n_seeds=n_seeds, k_max=k_max, slack=slack)
        )
    except (ConfigError, ValueError) as exc:
        _fail_config(str(exc))
    if out_path:
        lines = ["k,empirical_mse,envelope,product_term,series_term"]
        for row in resp.rows:
            lines.append(
                f"{row.k},{row.empirical_mse:.17g},{row.envelope:.17g},"
                f"{row.product_term:.17g},{row.series_term:.17g}"
            )
        Path(out_path).write_text("\n".join(lines) + "\n")
        click.echo(f"bound report written to {out_path}")
    for check in resp.checks:
        click.echo(f"{'PASS' if check.passed else 'FAIL'} {check.name}: {check.detail}")
    if not resp.passed:
        sys.exit(EXIT_VERIFY_FAIL)


@main.command("gen-data")
@click.option("--m", type=int, default=3, show_default=True, help="Model dimension including the bias.")
@click.option("--n-per-class", type=int, default=500, show_default=True)
@click.option("--center-distance", type=float, default=2.0, show_default=True)
@click.option("--sigma", type=float, default=1.5, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=str)
@click.option("--server", type=str, default=None)
def cmd_gen_data(m, n_per_class, center_distance, sigma, seed, out_path, server):
    """Generate a two-blob classification dataset and save it as CSV."""
    try:
        resp = ServiceClient(server).gen_data(
            service.GenDataRequest(
                m=m, n_per_class=n_per_class, center_distance=center_distance, sigma=sigma, seed=seed
            )
        )
        ds = data_mod.LabeledDataset(features=resp.features, labels=resp.labels)
        data_mod.save_csv(ds, out_path)
    except (ConfigError, ParseError, ValueError, OSError) as exc:
        _fail_config(str(exc))
    click.echo(f"{resp.n_samples} samples (classes {resp.class_counts[0]}/{resp.class_counts[1]}) -> {out_path}")


@main.command("serve")
@click.option("--host", type=str, default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def cmd_serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    uvicorn.run(service.app, host=host, port=port)


if __name__ == "__main__":
    main()
