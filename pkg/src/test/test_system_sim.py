# src/test/test_system_sim.py
from __future__ import annotations

from dataclasses import replace

import pytest

from src.core.energy import energy_report
from src.core.errors import CapacityError, UncorrectableSegmentError
from src.core.hw_models import (
    HwConfig,
    bytes_to_ps,
    cycles_to_ps,
    hardware_preset,
    peak_throughput,
)
from src.core.llm_models import WorkloadTrace
from src.core.roofline import Bound, resolve_platform, roofline_point, roofline_sweep
from src.core.simulate import decode_energy, run_inference
from src.core.workload import builtin_model, derive_breakdown
from src.ecc import CodeConfig, FaultModel
from src.engine.events import EventKind, EventQueue
from src.engine.system_sim import bandwidth_bound_tps


# =========================
# Peak throughput
# =========================

def test_peak_throughput_presets():
    assert peak_throughput(hardware_preset("NVLLM")) == 307.2e9
    assert peak_throughput(hardware_preset("NVLLM-12C")) == pytest.approx(396.8e9)
    assert peak_throughput(hardware_preset("NVLLM-16C")) == 486.4e9


def test_peak_throughput_without_lanes():
    assert peak_throughput(HwConfig(num_ooo_ecdp_nand=0, num_ooo_ecdp_npu=0)) == 0


def test_unknown_preset_lists_available():
    with pytest.raises(ValueError, match="NVLLM-16C"):
        hardware_preset("NVLLM-99C")


def test_preset_geometry():
    for name, clusters in (("NVLLM", 8), ("NVLLM-12C", 12), ("NVLLM-16C", 16)):
        hw = hardware_preset(name)
        assert hw.num_ooo_ecdp_nand == clusters
        assert hw.nand.num_clusters == clusters
        assert hw.nand.num_planes == 4 * clusters
        assert hw.nand.clock_hz == 350_000_000
        assert hw.npu_clock_hz == 500_000_000


# =========================
# Event queue
# =========================

def test_event_queue_orders_ties_by_kind_then_sequence():
    q = EventQueue()
    q.push(10, EventKind.TOKEN_DONE, tag="a")
    q.push(10, EventKind.PAGE_READ_DONE, tag="b")
    q.push(5, EventKind.MAC_COMMIT, tag="c")
    q.push(10, EventKind.PAGE_READ_DONE, tag="d")
    assert [e.payload["tag"] for e in q.drain()] == ["c", "b", "d", "a"]


def test_event_queue_rejects_the_past():
    q = EventQueue()
    q.push(10, EventKind.MAC_COMMIT)
    q.pop()
    with pytest.raises(ValueError):
        q.push(5, EventKind.MAC_COMMIT)


# =========================
# Pipeline oracle at toy scale
# =========================

def _expected_decode_ps(model, hw, ctx0: int) -> int:
    """Stage-by-stage decode pass time with every projection column on the NPU."""
    h = model.d_model
    bw, lat = hw.dram.bandwidth_bps, hw.dram.latency_ps
    npu_rate = hw.npu_macs_per_s
    cols = model.qkvo_columns
    act = hw.io.activation_bytes
    page = hw.nand.read_latency_ps
    kv_per_layer = 2 * model.kv_dim * 2
    agg_per_layer = 4 * h

    total = 0
    for _ in range(model.num_layers):
        total += max(bytes_to_ps(cols * h, bw) + lat, bytes_to_ps(cols * h, npu_rate))
        kv = (ctx0 + 1) * kv_per_layer
        ops = (ctx0 + 1) * agg_per_layer + h
        total += max(bytes_to_ps(kv, bw) + lat, bytes_to_ps(ops, 2 * npu_rate))
        total += bytes_to_ps(2 * h * act, hw.io.bandwidth_bps)
        # up and down projections: one page per plane each, supply bound
        total += 2 * page
    total += bytes_to_ps(h * act, hw.io.bandwidth_bps) + page + bytes_to_ps(model.vocab_size * act, hw.io.bandwidth_bps)
    return total


def test_toy_pipeline_matches_stage_oracle(toy_model, nvllm):
    result = run_inference(toy_model, WorkloadTrace.single(4, 4), nvllm, sched_enabled=False)
    decode = [r for r in result.tokens if r["phase"] == "decode"]
    assert len(decode) == 4
    for row in decode:
        assert row["time_ps"] == _expected_decode_ps(toy_model, nvllm, row["kv_len"] - 1)
        # 256 segments per FFN matrix over 8 lanes, 192 head segments
        assert row["cycles_nand"] == 2 * (32 + 32) + 24


def test_toy_prefill_lane_cycles(toy_model, nvllm):
    result = run_inference(toy_model, WorkloadTrace.single(4, 1), nvllm, sched_enabled=False)
    prefill = result.tokens[0]
    assert prefill["phase"] == "prefill"
    assert prefill["tokens"] == 4
    npu_cols = prefill["bitmap_popcount"]
    nand_segments = (toy_model.qkvo_columns - npu_cols) * 2
    proj = -(-nand_segments // 8) * 4
    assert prefill["cycles_nand"] == 2 * (proj + 4 * 32 + 4 * 32) + 24


def test_lane_time_rounds_up_to_whole_ps():
    assert cycles_to_ps(32, 350_000_000) == 91_429


def test_prefill_share_override(toy_model, nvllm):
    hw = nvllm.with_overrides(sched=replace(nvllm.sched, prefill_npu_share=1.0))
    result = run_inference(toy_model, WorkloadTrace.single(4, 1), hw)
    assert result.tokens[0]["bitmap_popcount"] == toy_model.qkvo_columns


# =========================
# Metrics invariants
# =========================

def test_metrics_invariants(toy_model, nvllm):
    result = run_inference(toy_model, WorkloadTrace(turns=((4, 4), (2, 3))), nvllm,
                           fault=FaultModel(rber=1e-4, seed=1), policy="proceed")
    m = result.summary
    assert m.seconds_per_inference == pytest.approx(m.prefill_seconds + m.decode_seconds)
    assert sum(m.path_energy.values()) == pytest.approx(m.data_movement_joules)
    assert m.prefill_tokens == 6
    assert m.decode_tokens == 7
    assert len(result.tokens) == 2 + 7
    assert [r["turn"] for r in result.tokens] == [0] * 5 + [1] * 4
    assert 0.0 <= m.stall_fraction <= 1.0


def test_same_seed_is_deterministic(toy_model, nvllm):
    fault = FaultModel(rber=1e-3, seed=11)
    a = run_inference(toy_model, WorkloadTrace.single(4, 4), nvllm, fault=fault, policy="proceed")
    b = run_inference(toy_model, WorkloadTrace.single(4, 4), nvllm, fault=fault, policy="proceed")
    assert a.summary == b.summary
    assert a.tokens == b.tokens


def test_recorded_events_are_ordered(toy_model, nvllm):
    result = run_inference(toy_model, WorkloadTrace.single(2, 2), nvllm, record_events=True)
    stamps = [e.timestamp for e in result.events]
    assert stamps == sorted(stamps)
    assert sum(result.event_counts.values()) == len(result.events)
    assert result.event_counts["TokenDone"] == 3


def test_events_not_kept_by_default(toy_model, nvllm):
    assert run_inference(toy_model, WorkloadTrace.single(2, 2), nvllm).events == []


def test_uncorrectable_read_aborts(toy_model, nvllm):
    with pytest.raises(UncorrectableSegmentError) as exc:
        run_inference(toy_model, WorkloadTrace.single(2, 2), nvllm, fault=FaultModel(rber=0.01, seed=2))
    assert exc.value.matrix is not None


def test_uncorrectable_read_proceeds_and_counts(toy_model, nvllm):
    result = run_inference(toy_model, WorkloadTrace.single(2, 2), nvllm,
                           fault=FaultModel(rber=0.01, seed=2), policy="proceed")
    assert result.summary.uncorrectable_segments > 0
    assert result.summary.corrected_segments > 0


def test_higher_rber_never_speeds_up(nvllm):
    model = builtin_model("OPT-1.3B")
    trace = WorkloadTrace.single(2, 2)
    tps = [
        run_inference(model, trace, nvllm, fault=FaultModel(rber=r, seed=0), policy="proceed").summary.tokens_per_second
        for r in (0.0, 1e-4, 1e-3)
    ]
    assert tps[0] >= tps[1] >= tps[2]


def test_dram_capacity_error(toy_model, nvllm):
    hw = nvllm.with_overrides(dram=replace(nvllm.dram, capacity_bytes=1024))
    with pytest.raises(CapacityError) as exc:
        run_inference(toy_model, WorkloadTrace.single(4, 4), hw)
    assert exc.value.matrix == "kv_cache"


def test_nand_capacity_error(nvllm):
    hw = nvllm.with_overrides(nand=replace(nvllm.nand, plane_capacity_bytes=2**20))
    with pytest.raises(CapacityError):
        run_inference(builtin_model("OPT-6.7B"), WorkloadTrace.single(1, 1), hw)


def test_unknown_policy(toy_model, nvllm):
    with pytest.raises(ValueError):
        run_inference(toy_model, WorkloadTrace.single(1, 1), nvllm, policy="retry")


def test_opt30b_decode_within_bandwidth_bound(nvllm):
    model = builtin_model("OPT-30B")
    result = run_inference(model, WorkloadTrace.single(1, 2, initial_kv_len=63), nvllm)
    bound = bandwidth_bound_tps(derive_breakdown(model), nvllm, CodeConfig())
    assert 0 < result.summary.tokens_per_second <= bound


def test_more_clusters_are_faster():
    model = builtin_model("OPT-6.7B")
    tps = [
        run_inference(model, WorkloadTrace.single(1, 2), hardware_preset(name)).summary.tokens_per_second
        for name in ("NVLLM", "NVLLM-12C", "NVLLM-16C")
    ]
    assert tps[0] < tps[1] < tps[2]


def test_scheduler_moves_columns_during_decode(llama2_7b, nvllm):
    trace = WorkloadTrace.single(1, 16, initial_kv_len=512)
    on = run_inference(llama2_7b, trace, nvllm, sched_enabled=True)
    off = run_inference(llama2_7b, trace, nvllm, sched_enabled=False)
    assert on.summary.scheduler_events > 0
    assert off.summary.scheduler_events == 0
    decode_on = [r for r in on.tokens if r["phase"] == "decode"]
    assert decode_on[-1]["bitmap_popcount"] < decode_on[0]["bitmap_popcount"]
    assert on.summary.tokens_per_second >= off.summary.tokens_per_second


# =========================
# Energy
# =========================

def test_energy_report_by_path(nvllm):
    rows = [
        {"nand_bytes": 1000, "io_bytes": 100, "dram_bytes": 10, "macs": 50, "time_ps": 10**12},
        {"nand_bytes": 1000, "io_bytes": 0, "dram_bytes": 0, "macs": 0, "time_ps": 0},
    ]
    e = nvllm.energy
    report = energy_report(rows, e)
    assert report["nand"] == pytest.approx(2000 * e.pj_per_byte_nand * 1e-12)
    assert report["io"] == pytest.approx(100 * e.pj_per_byte_io * 1e-12)
    assert report["dram"] == pytest.approx(10 * e.pj_per_byte_dram * 1e-12)
    assert report["data_movement"] == pytest.approx(report["nand"] + report["io"] + report["dram"])
    assert report["mac"] == pytest.approx(100 * e.pj_per_op_mac * 1e-12)
    assert report["static"] == pytest.approx(e.static_w_npu + e.static_w_nand_cmos)


def test_empty_log_has_no_energy(nvllm):
    assert energy_report([], nvllm.energy)["total"] == 0.0


def test_io_path_is_negligible(nvllm):
    e = decode_energy(builtin_model("OPT-6.7B"), nvllm, ctx=128)
    assert e["io"] < 0.02 * e["data_movement"]


# =========================
# Roofline
# =========================

def test_decode_is_memory_bound_on_gpu():
    point = roofline_point(builtin_model("OPT-6.7B"), 1024, resolve_platform("A100-80GB"))
    assert point.bound == Bound.MEMORY
    assert point.attainable_ops == pytest.approx(point.arithmetic_intensity * point.bandwidth_bps)


def test_long_prompt_is_compute_bound():
    point = roofline_point(builtin_model("OPT-6.7B"), 0, resolve_platform("Ryzen-AI-395"), tokens=2048)
    assert point.bound == Bound.COMPUTE
    assert point.attainable_ops == point.peak_ops


def test_roofline_sweep_shape(nvllm):
    frame = roofline_sweep([builtin_model("OPT-1.3B")], [resolve_platform("NVLLM")], [0, 1024])
    assert len(frame) == 2
    assert set(frame["bound"]) <= {"MemoryBound", "ComputeBound"}


def test_unknown_platform():
    with pytest.raises(ValueError):
        resolve_platform("nosuch")
