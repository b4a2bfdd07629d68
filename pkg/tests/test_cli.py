import json

import pytest
from click.testing import CliRunner

from ota_fedsim.cli import main


@pytest.fixture
def runner():
    return CliRunner()


def write_config(tmp_path, **overrides):
    payload = {
        "protocol": "fedcota",
        "N": 4,
        "m": 3,
        "samples_per_agent": 1,
        "loss": "quadratic",
        "lambda": 0.0,
        "constraint": {"ball_radius": 10.0},
        "schedule": {"eta_c": 1.0},
        "channel": {"dist": "uniform", "params": {"lo": 0.5, "hi": 1.5}},
        "rounds": 10,
        "seeds": {"data": 1, "init": 2, "channel": 3},
    }
    payload.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(payload))
    return path


class TestRun:
    def test_writes_trace_and_summary(self, runner, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "trace.csv"
        result = runner.invoke(main, ["run", "--config", str(cfg), "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert "final epsilon" in result.output
        assert "slots used: 20" in result.output
        lines = out.read_text().splitlines()
        assert lines[0].startswith("k,epsilon,global_loss,theta_0")
        assert len(lines) == 12

    def test_missing_config_exits_2_and_names_path(self, runner, tmp_path):
        missing = tmp_path / "absent.json"
        result = runner.invoke(main, ["run", "--config", str(missing), "--out", str(tmp_path / "o.csv")])
        assert result.exit_code == 2
        assert "absent.json" in result.output

    def test_bad_config_exits_2(self, runner, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"protocol": "fedcota"}))
        result = runner.invoke(main, ["run", "--config", str(path), "--out", str(tmp_path / "o.csv")])
        assert result.exit_code == 2

    def test_output_path_from_config(self, runner, tmp_path):
        out = tmp_path / "from_config.csv"
        cfg = write_config(tmp_path, output=str(out))
        result = runner.invoke(main, ["run", "--config", str(cfg)])
        assert result.exit_code == 0
        assert out.exists()

    def test_no_output_path_exits_2(self, runner, tmp_path):
        cfg = write_config(tmp_path)
        result = runner.invoke(main, ["run", "--config", str(cfg)])
        assert result.exit_code == 2
        assert "output" in result.output

    def test_overrides_change_the_run(self, runner, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "avg.csv"
        result = runner.invoke(
            main,
            ["run", "--config", str(cfg), "--protocol", "fedavg", "--rounds", "5", "--out", str(out)],
        )
        assert result.exit_code == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 7
        # fedavg burns N slots per round
        assert lines[-1].split(",")[-1] == "20"

    def test_seed_channel_override(self, runner, tmp_path):
        cfg = write_config(tmp_path)
        out_a, out_b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert runner.invoke(main, ["run", "--config", str(cfg), "--out", str(out_a)]).exit_code == 0
        assert (
            runner.invoke(
                main, ["run", "--config", str(cfg), "--seed-channel", "99", "--out", str(out_b)]
            ).exit_code
            == 0
        )
        assert out_a.read_text() != out_b.read_text()


class TestCompare:
    def test_joint_csv(self, runner, tmp_path):
        cfg = write_config(tmp_path, rounds=6)
        out = tmp_path / "cmp.csv"
        result = runner.invoke(main, ["compare", "--config", str(cfg), "--out", str(out)])
        assert result.exit_code == 0, result.output
        lines = out.read_text().splitlines()
        assert lines[0] == "protocol,k,cumulative_slots,epsilon,global_loss"
        assert len(lines) == 13  # 6 rounds per protocol plus header


class TestVerifyBounds:
    def test_pass_exits_zero(self, runner, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "report.csv"
        result = runner.invoke(
            main,
            ["verify-bounds", "--config", str(cfg), "--seeds", "20", "--k-max", "20", "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        assert "PASS envelope_dominance" in result.output
        assert out.read_text().splitlines()[0] == "k,empirical_mse,envelope,product_term,series_term"

    def test_step_scale_refusal_exits_2(self, runner, tmp_path):
        cfg = write_config(tmp_path, schedule={"eta_c": 1.5})
        result = runner.invoke(main, ["verify-bounds", "--config", str(cfg), "--seeds", "2"])
        assert result.exit_code == 2
        assert "1/L" in result.output


class TestGenData:
    def test_writes_dataset_csv(self, runner, tmp_path):
        out = tmp_path / "data.csv"
        result = runner.invoke(
            main, ["gen-data", "--m", "3", "--n-per-class", "10", "--seed", "4", "--out", str(out)]
        )
        assert result.exit_code == 0, result.output
        lines = out.read_text().splitlines()
        assert lines[0] == "u_0,u_1,u_2,z"
        assert len(lines) == 21

    def test_gen_data_deterministic(self, runner, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for out in (a, b):
            assert (
                runner.invoke(
                    main, ["gen-data", "--m", "3", "--n-per-class", "10", "--seed", "4", "--out", str(out)]
                ).exit_code
                == 0
            )
        assert a.read_bytes() == b.read_bytes()
