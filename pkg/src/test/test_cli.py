# src/test/test_cli.py
from __future__ import annotations

import pandas as pd
import pytest

from src.app import simulations
from src.app.cli import main
from src.automation.sweep import SWEEP_COLUMNS, parse_values, run_sweep, write_sweep
from src.config.schema import load_config
from src.core.errors import ConfigError
from src.storage.run_writer import (
    CONFIG_FILE,
    METRICS_FILE,
    SUMMARY_FILE,
    TOKENS_FILE,
    load_metrics,
    load_run,
)


# =========================
# simulate
# =========================

def test_simulate_writes_run_files(toy_config, tmp_path):
    out = tmp_path / "run"
    assert main(["simulate", "--config", str(toy_config), "--out", str(out)]) == 0
    for name in (METRICS_FILE, TOKENS_FILE, SUMMARY_FILE, CONFIG_FILE):
        assert (out / name).exists()

    result = load_run(out)
    assert len(result.tokens) == 1 + 4
    assert result.tokens[0]["phase"] == "prefill"
    assert result.run_info["model"] == "toy"
    assert result.run_info["seed"] == 7
    metrics, info = load_metrics(out)
    assert metrics == result.summary
    assert metrics.decode_tokens == 4
    assert "tokens/s" in (out / SUMMARY_FILE).read_text()


def test_simulate_is_byte_reproducible(toy_config, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", str(toy_config), "--out", str(a)]) == 0
    assert main(["simulate", "--config", str(toy_config), "--out", str(b)]) == 0
    assert (a / METRICS_FILE).read_bytes() == (b / METRICS_FILE).read_bytes()
    assert (a / TOKENS_FILE).read_bytes() == (b / TOKENS_FILE).read_bytes()


def test_saved_config_reloads(toy_config, tmp_path):
    out = tmp_path / "run"
    main(["simulate", "--config", str(toy_config), "--out", str(out)])
    assert load_config(out / CONFIG_FILE).values == load_config(toy_config).values


def test_simulate_without_out_uses_output_dir(toy_config, tmp_path):
    assert main(["simulate", "--config", str(toy_config)]) == 0
    runs = list((tmp_path / "runs" / "toy" / "NVLLM").iterdir())
    assert len(runs) == 1
    assert (runs[0] / METRICS_FILE).exists()


def test_bad_rber_exits_2(toy_config, tmp_path):
    code = main(["simulate", "--config", str(toy_config), "--set", "fault.rber=2.0", "--out", str(tmp_path / "x")])
    assert code == 2
    assert not (tmp_path / "x").exists()


def test_unknown_key_exits_2(toy_config, tmp_path):
    assert main(["simulate", "--config", str(toy_config), "--set", "nand.colour=1", "--out", str(tmp_path / "x")]) == 2


def test_capacity_error_exits_3(toy_config, tmp_path):
    code = main(["simulate", "--config", str(toy_config), "--model", "OPT-6.7B", "--set", "model.file=null",
                 "--set", "nand.plane_capacity_gib=0.001", "--out", str(tmp_path / "x")])
    assert code == 3


def test_uncorrectable_abort_exits_4(toy_config, tmp_path):
    code = main([
        "simulate", "--config", str(toy_config),
        "--set", "fault.rber=0.05", "--set", "fault.uncorrectable_policy=abort",
        "--out", str(tmp_path / "x"),
    ])
    assert code == 4


def test_missing_config_exits_2(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "nope.json")]) == 2


# =========================
# validate / baseline / roofline
# =========================

def test_validate_passes():
    assert main(["validate", "--ecdp-jobs", "30", "--scheduler-instances", "200"]) == 0


def test_validate_catches_broken_corrector():
    code = main(["validate", "--ecdp-jobs", "30", "--scheduler-instances", "200", "--disable-correction"])
    assert code == 1


def test_baseline_table(toy_config, tmp_path, capsys):
    code = main(["baseline", "--config", str(toy_config), "--kinds", "GpuSsd,CambriconLike",
                 "--decode", "2", "--energy", "--out", str(tmp_path)])
    assert code == 0
    frame = pd.read_csv(tmp_path / "baselines.csv")
    assert frame["baseline"].tolist() == ["GpuSsd", "CambriconLike"]
    assert (frame["speedup"] > 0).all()
    assert "energy_ratio" in frame.columns


def test_roofline_table(tmp_path):
    code = main(["roofline", "--models", "OPT-1.3B", "--platforms", "A100-80GB,NVLLM",
                 "--contexts", "0,1024", "--out", str(tmp_path)])
    assert code == 0
    frame = pd.read_csv(tmp_path / "roofline.csv")
    assert len(frame) == 4
    assert set(frame["platform"]) == {"A100-80GB", "NVLLM"}


def test_roofline_unknown_platform_exits_2():
    assert main(["roofline", "--platforms", "TPU-v9"]) == 2


# =========================
# sweep
# =========================

def test_parse_values():
    assert parse_values("fault.rber", "0, 1e-4,") == [0.0, 1e-4]
    assert parse_values("hardware.preset", "NVLLM,NVLLM-16C") == ["NVLLM", "NVLLM-16C"]
    with pytest.raises(ConfigError):
        parse_values("fault.rber", "2")
    with pytest.raises(ConfigError):
        parse_values("nand.colour", "1")


def test_empty_sweep_writes_header_only(toy_config, tmp_path):
    frame = run_sweep(load_config(toy_config), "fault.rber", [])
    assert frame.empty
    assert list(frame.columns) == SWEEP_COLUMNS
    path = write_sweep(frame, tmp_path / "sweep.csv")
    assert path.read_text().strip() == ",".join(SWEEP_COLUMNS)


def test_sweep_rows_follow_value_order(toy_config):
    cfg = load_config(toy_config)
    frame = run_sweep(cfg, "trace.initial_kv_len", [64, 0, 16])
    assert frame["value"].tolist() == [64, 0, 16]
    assert (frame["error"] == "").all()
    assert (frame["seed"] == 7).all()


def test_parallel_sweep_matches_serial(toy_config):
    cfg = load_config(toy_config)
    values = [0.0, 1e-4, 1e-3]
    serial = run_sweep(cfg, "fault.rber", values, jobs=1)
    parallel = run_sweep(cfg, "fault.rber", values, jobs=2)
    pd.testing.assert_frame_equal(serial, parallel)


def test_rber_sweep_never_speeds_up(toy_config):
    frame = run_sweep(load_config(toy_config), "fault.rber", [0.0, 1e-4, 1e-3])
    tps = frame["tokens_per_second"].tolist()
    assert tps[0] >= tps[1] >= tps[2]


def test_failed_point_stays_in_matrix(toy_config):
    cfg = load_config(toy_config, {"fault.uncorrectable_policy": "abort"})
    frame = run_sweep(cfg, "fault.rber", [0.0, 0.05])
    assert len(frame) == 2
    assert frame.loc[0, "error"] == ""
    assert frame.loc[1, "error"].startswith("exit 4")


def test_unknown_axis(toy_config):
    with pytest.raises(ConfigError):
        run_sweep(load_config(toy_config), "nand.colour", [1])


def test_sweep_command(toy_config, tmp_path):
    out = tmp_path / "sw"
    code = main(["sweep", "--config", str(toy_config), "--axis", "hardware.preset",
                 "--values", "NVLLM,NVLLM-16C", "--out", str(out)])
    assert code == 0
    frame = pd.read_csv(out / "sweep.csv")
    assert frame["hardware"].tolist() == ["NVLLM", "NVLLM-16C"]


# =========================
# HTTP surface
# =========================

@pytest.fixture
def client(tmp_path, monkeypatch):
    from src.app.main import app

    monkeypatch.setattr(simulations, "RUNS_DIR", tmp_path / "sim_runs")
    app.config["TESTING"] = True
    return app.test_client()


def test_presets_endpoint(client):
    body = client.get("/presets").get_json()
    assert "NVLLM-16C" in body["hardware"]
    assert "OPT-30B" in body["models"]


def test_post_simulation(client, toy_config, tmp_path):
    import json

    data = json.loads(toy_config.read_text())
    resp = client.post("/simulations", json=data)
    assert resp.status_code == 200
    body = resp.get_json()
    assert body["model"] == "toy"
    assert body["num_passes"] == 5
    assert (tmp_path / "sim_runs" / "toy" / "NVLLM" / body["run_id"] / METRICS_FILE).exists()


def test_post_simulation_rejects_bad_config(client):
    resp = client.post("/simulations", json={"fault": {"rber": 2.0}})
    assert resp.status_code == 400
    body = resp.get_json()
    assert body["exit_code"] == 2
    assert body["path"] == "fault.rber"
