# src/test/test_baselines.py
from __future__ import annotations

import pytest

from src.baselines import BASELINE_REGISTRY, baseline_throughput, calibrate_factor, get_baseline_class
from src.baselines.base import baseline_params
from src.core.workload import builtin_model, derive_breakdown

PJ = 1e-12


@pytest.fixture
def opt30b():
    return builtin_model("OPT-30B")


def test_registry_lists_every_kind():
    assert set(BASELINE_REGISTRY) == {"GpuDram", "GpuSsd", "GpuHybrid", "CambriconLike", "AiFLike", "AiFMinusLike"}


def test_unknown_kind():
    with pytest.raises(ValueError, match="Unknown baseline"):
        get_baseline_class("Tpu")


def test_weight_bytes_are_linear_layers(llama2_7b):
    cls = get_baseline_class("GpuSsd")
    assert cls.weight_bytes(llama2_7b) == 6_607_077_376


def test_gpu_ssd_is_link_bound(opt30b):
    tps = baseline_throughput("GpuSsd", opt30b)
    assert tps == pytest.approx(0.27, rel=0.15)
    bd = derive_breakdown(opt30b)
    assert tps == pytest.approx(8e9 / (bd.linear_macs * opt30b.bytes_per_weight))


def test_gpu_variants_order(opt30b):
    ssd = baseline_throughput("GpuSsd", opt30b)
    hybrid = baseline_throughput("GpuHybrid", opt30b)
    dram = baseline_throughput("GpuDram", opt30b)
    assert ssd < hybrid < dram


def test_hybrid_endpoints_match_pure_variants(opt30b):
    all_ssd = baseline_throughput("GpuHybrid", opt30b, {"dram_fraction": 0.0})
    all_dram = baseline_throughput("GpuHybrid", opt30b, {"dram_fraction": 1.0})
    assert all_ssd == pytest.approx(baseline_throughput("GpuSsd", opt30b))
    assert all_dram == pytest.approx(baseline_throughput("GpuDram", opt30b))


def test_hybrid_rejects_bad_fraction(opt30b):
    with pytest.raises(ValueError):
        baseline_throughput("GpuHybrid", opt30b, {"dram_fraction": 1.5})


@pytest.mark.parametrize(
    "kind, target",
    [("CambriconLike", 3.6), ("AiFLike", 13.1), ("AiFMinusLike", 9.8)],
)
def test_frozen_factors_hit_published_throughput(llama2_7b, kind, target):
    assert baseline_throughput(kind, llama2_7b) == pytest.approx(target, rel=0.15)


@pytest.mark.parametrize(
    "kind, target",
    [("CambriconLike", 3.6), ("AiFLike", 13.1), ("AiFMinusLike", 9.8)],
)
def test_calibration_reproduces_frozen_factor(llama2_7b, kind, target):
    fitted = calibrate_factor(kind, llama2_7b, target)
    assert fitted == pytest.approx(baseline_params(kind)["factor"], rel=1e-3)
    assert baseline_throughput(kind, llama2_7b, {"factor": fitted}) == pytest.approx(target)


def test_calibration_rejects_bad_targets(llama2_7b):
    with pytest.raises(ValueError):
        calibrate_factor("CambriconLike", llama2_7b, 0.0)
    # the in-flash compute caps this kind well below 1000 tok/s
    with pytest.raises(ValueError, match="compute bound"):
        calibrate_factor("CambriconLike", llama2_7b, 1000.0)


def test_larger_models_are_slower():
    tps = [baseline_throughput("AiFLike", builtin_model(n)) for n in ("OPT-1.3B", "OPT-6.7B", "OPT-30B")]
    assert tps[0] > tps[1] > tps[2]


def test_prefill_streams_weights_once(opt30b):
    b = get_baseline_class("GpuSsd")()
    one = b.token_seconds(opt30b)
    assert b.prefill_seconds(opt30b, 64) == pytest.approx(one, rel=1e-3)
    pre, dec = b.latency(opt30b, 64, 4)
    assert pre == pytest.approx(one, rel=1e-3)
    assert dec == pytest.approx(4 * one, rel=1e-3)


def test_gpu_ssd_energy_paths(opt30b):
    b = get_baseline_class("GpuSsd")()
    moved = b.weight_bytes(opt30b)
    e = b.token_energy(opt30b)
    assert e["nand"] == pytest.approx(moved * 31.0 * PJ)
    assert e["io"] == pytest.approx(moved * 10.0 * PJ)
    assert e["dram"] == 0.0
    assert b.token_data_movement(opt30b) == pytest.approx(sum(e.values()))


def test_flash_baseline_energy_grows_with_context(opt30b):
    b = get_baseline_class("CambriconLike")()
    short = b.token_energy(opt30b, ctx=0)
    long = b.token_energy(opt30b, ctx=1024)
    assert short["nand"] == long["nand"]
    assert long["dram"] > short["dram"]
    assert short["io"] == pytest.approx(b.weight_bytes(opt30b) * 30.0 * PJ)
