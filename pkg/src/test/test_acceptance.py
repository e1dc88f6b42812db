# src/test/test_acceptance.py
"""End-to-end acceptance runs. Deselect with -m "not slow"."""
from __future__ import annotations

import pytest

from src.automation.sweep import run_sweep, write_sweep
from src.automation.validate import (
    check_ecc_exhaustive,
    check_ecdp_equivalence,
    check_lane_formula,
    check_scheduler,
)
from src.baselines import baseline_throughput, get_baseline_class
from src.config.schema import load_config
from src.core.hw_models import PS_PER_S, hardware_preset, peak_throughput
from src.core.llm_models import WorkloadTrace
from src.core.simulate import decode_energy, run_inference
from src.core.workload import builtin_model
from src.ecc import FaultModel
from src.engine.nand_fabric import aggregate_bandwidth
from src.storage.run_writer import METRICS_FILE, write_run

pytestmark = pytest.mark.slow

PAIRS = [(16, 16), (64, 64), (256, 256)]


def test_peak_throughput_identity():
    assert peak_throughput(hardware_preset("NVLLM")) == 307.2e9
    assert peak_throughput(hardware_preset("NVLLM-16C")) == 486.4e9


def test_bandwidth_identity():
    # 32 planes x 16 KiB / 5.12 us, reported as ~100 GB/s
    assert aggregate_bandwidth(hardware_preset("NVLLM").nand) == 102.4e9


def test_ecdp_oracle_equivalence():
    result = check_ecdp_equivalence(jobs=10_000, seed=0)
    assert result.ok, result.detail


def test_ecc_exhaustive():
    result = check_ecc_exhaustive()
    assert result.ok, result.detail


def test_scheduler_equivalence():
    result = check_scheduler(instances=10_000, seed=0)
    assert result.ok, result.detail


def test_lane_formula_bounds():
    assert check_lane_formula(cases=2000).ok


@pytest.mark.parametrize("prefill, decode", PAIRS)
def test_prefill_share(prefill, decode):
    model = builtin_model("OPT-30B")
    result = run_inference(model, WorkloadTrace.single(prefill, decode), hardware_preset("NVLLM"))
    assert 0.35 <= result.summary.prefill_fraction <= 0.55

    pre, dec = get_baseline_class("GpuSsd")().latency(model, prefill, decode)
    assert pre / (pre + dec) < 0.10


def test_calibrated_speedups(llama2_7b):
    nvllm = run_inference(llama2_7b, WorkloadTrace.single(16, 16), hardware_preset("NVLLM-16C"))
    tps = nvllm.summary.tokens_per_second
    for kind, speedup in (("CambriconLike", 4.7), ("AiFLike", 1.3), ("AiFMinusLike", 1.7)):
        baseline = baseline_throughput(kind, llama2_7b)
        assert tps > baseline
        assert tps / baseline == pytest.approx(speedup, rel=0.30)


def test_latency_scales_with_request_length():
    model = builtin_model("OPT-30B")
    hw = hardware_preset("NVLLM-16C")
    per_token = []
    last = 0.0
    for prefill, decode in PAIRS:
        s = run_inference(model, WorkloadTrace.single(prefill, decode), hw).summary.seconds_per_inference
        assert s > last
        last = s
        per_token.append(s / (prefill + decode))
    for cost in per_token[1:]:
        assert cost == pytest.approx(per_token[0], rel=0.35)


def test_kv_aware_scheduling(llama2_7b):
    hw = hardware_preset("NVLLM-16C")
    trace = WorkloadTrace.single(1, 4095)
    on = [r for r in run_inference(llama2_7b, trace, hw, sched_enabled=True).tokens if r["phase"] == "decode"]
    off = [r for r in run_inference(llama2_7b, trace, hw, sched_enabled=False).tokens if r["phase"] == "decode"]
    assert len(on) == len(off) == 4095
    assert on[-1]["kv_len"] == 4096

    for a, b in zip(on, off):
        assert a["time_ps"] <= b["time_ps"]

    def slope(rows):
        by_kv = {r["kv_len"]: r["time_ps"] for r in rows}
        return (by_kv[4096] - by_kv[1024]) / (4096 - 1024) / PS_PER_S

    assert slope(on) < slope(off)


def test_energy_advantage_trend():
    flash = get_baseline_class("CambriconLike")()
    hw = hardware_preset("NVLLM")
    ratios = []
    for name in ("OPT-1.3B", "OPT-2.7B", "OPT-6.7B", "OPT-13B", "OPT-30B"):
        model = builtin_model(name)
        ours = decode_energy(model, hw, ctx=1024)["data_movement"]
        ratios.append(flash.token_data_movement(model, ctx=1024) / ours)
    assert ratios == sorted(ratios)
    assert ratios[-1] >= 3.0


def test_metrics_are_byte_identical(tmp_path):
    model = builtin_model("OPT-1.3B")
    hw = hardware_preset("NVLLM")
    fault = FaultModel(rber=1e-4, seed=21)
    for name in ("a", "b"):
        result = run_inference(model, WorkloadTrace.single(8, 8), hw, fault=fault, policy="proceed")
        write_run(result, tmp_path / name)
    assert (tmp_path / "a" / METRICS_FILE).read_bytes() == (tmp_path / "b" / METRICS_FILE).read_bytes()


def test_parallel_sweep_is_byte_identical(toy_config, tmp_path):
    cfg = load_config(toy_config)
    values = [0.0, 1e-5, 1e-4, 1e-3]
    serial = write_sweep(run_sweep(cfg, "fault.rber", values, jobs=1), tmp_path / "serial.csv")
    parallel = write_sweep(run_sweep(cfg, "fault.rber", values, jobs=3), tmp_path / "parallel.csv")
    assert serial.read_bytes() == parallel.read_bytes()
