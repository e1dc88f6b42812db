# src/test/test_scheduler.py
from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest

from src.automation.validate import brute_force_rebalance, check_scheduler
from src.core.errors import ConfigError
from src.core.llm_models import WorkloadTrace
from src.core.simulate import run_inference
from src.core.workload import derive_breakdown
from src.scheduling.kv_scheduler import (
    Bitmap,
    KvScheduler,
    SchedulerParams,
    derive_params,
    estimate_delta_cycles,
    per_context_cycles,
    projection_columns,
    rebalance,
    split_columns,
)

PARAMS = SchedulerParams(c_npu=100, u=4096, p=65536)


def test_threshold():
    assert PARAMS.threshold == 1600


def test_rebalance_clears_from_the_tail():
    out = rebalance(2000, PARAMS, Bitmap.from_string("11110"))
    assert str(out) == "11000"


def test_rebalance_below_threshold_is_identity():
    b = Bitmap.from_string("10110")
    assert rebalance(0, PARAMS, b) == b
    assert rebalance(1600, PARAMS, b) == b


def test_rebalance_all_zero_stays_zero():
    assert rebalance(10**9, PARAMS, Bitmap.zeros(8)) == Bitmap.zeros(8)


def test_rebalance_clears_at_most_popcount():
    assert rebalance(10**9, PARAMS, Bitmap.from_string("0101")) == Bitmap.zeros(4)


def test_rebalance_does_not_mutate_input():
    b = Bitmap.ones(5)
    rebalance(5000, PARAMS, b)
    assert b == Bitmap.ones(5)


@pytest.mark.parametrize(
    "fields",
    [dict(c_npu=0, u=1, p=1), dict(c_npu=1, u=0, p=1), dict(c_npu=1, u=8, p=4)],
)
def test_invalid_params_rejected(fields):
    with pytest.raises(ConfigError):
        SchedulerParams(**fields)


def test_bitmap_rejects_bad_string():
    with pytest.raises(ValueError):
        Bitmap.from_string("10a1")


def test_split_columns():
    assert split_columns(Bitmap.from_string("1010")) == ([0, 2], [1, 3])
    assert split_columns(Bitmap.ones(3)) == ([0, 1, 2], [])
    assert split_columns(Bitmap([])) == ([], [])


def test_rebalance_properties_on_random_bitmaps():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        h = int(rng.integers(1, 65))
        params = SchedulerParams(c_npu=int(rng.integers(1, 50)), u=int(rng.integers(1, 100)), p=int(rng.integers(100, 5000)))
        bits = rng.integers(0, 2, size=h).astype(bool)
        delta = int(rng.integers(0, 3 * params.threshold * h + 2))
        before = Bitmap(bits)
        after = rebalance(delta, params, before)

        assert after.popcount() <= before.popcount()
        if delta <= params.threshold:
            assert after == before
        else:
            k = math.ceil(delta / params.threshold)
            assert before.popcount() - after.popcount() == min(k, before.popcount())
            cleared = np.flatnonzero(before.bits & ~after.bits)
            ones = np.flatnonzero(before.bits)
            assert cleared.tolist() == ones[len(ones) - len(cleared):].tolist()
        assert after.bits.tolist() == brute_force_rebalance(delta, params.c_npu, params.u, params.p, bits.tolist())


def test_brute_force_check_passes():
    assert check_scheduler(instances=2000, seed=1).ok


# =========================
# Model-derived parameters
# =========================

def test_llama2_7b_parameters(llama2_7b, nvllm):
    params = derive_params(llama2_7b, nvllm)
    assert params.c_npu == 32
    assert params.threshold == 512
    assert projection_columns(llama2_7b) == 16384
    assert per_context_cycles(derive_breakdown(llama2_7b), nvllm) == 3841


def test_estimate_delta_cycles(llama2_7b, nvllm):
    bd = derive_breakdown(llama2_7b)
    c = per_context_cycles(bd, nvllm)
    assert estimate_delta_cycles(100, 100, bd, nvllm) == 0
    assert estimate_delta_cycles(101, 100, bd, nvllm) == c
    with pytest.raises(ValueError):
        estimate_delta_cycles(99, 100, bd, nvllm)
    assert estimate_delta_cycles(110, 100, per_context=7) == 70
    with pytest.raises(ValueError):
        estimate_delta_cycles(110, 100)


def test_session_delta_uses_estimate(llama2_7b, nvllm, monkeypatch):
    from src.scheduling import kv_scheduler

    bd = derive_breakdown(llama2_7b)
    calls = []
    real = kv_scheduler.estimate_delta_cycles

    def counting(*args, **kwargs):
        calls.append(args[:2])
        return real(*args, **kwargs)

    monkeypatch.setattr(kv_scheduler, "estimate_delta_cycles", counting)
    sched = KvScheduler.for_model(llama2_7b, bd, nvllm, enabled=True)
    sched.reset(200)
    decision = sched.step(203)
    assert calls == [(203, 200)]
    assert decision.delta_c == real(203, 200, bd, nvllm)


def test_estimate_matches_simulated_npu_cycles(llama2_7b, nvllm):
    bd = derive_breakdown(llama2_7b)

    def decode_npu_cycles(ctx: int) -> int:
        result = run_inference(llama2_7b, WorkloadTrace.single(1, 1, initial_kv_len=ctx), nvllm, sched_enabled=False)
        return [r for r in result.tokens if r["phase"] == "decode"][0]["cycles_npu"]

    measured = decode_npu_cycles(1512) - decode_npu_cycles(1000)
    assert estimate_delta_cycles(1512, 1000, bd, nvllm) == pytest.approx(measured, rel=0.05)


# =========================
# Session state
# =========================

def test_session_moves_columns_as_kv_grows(llama2_7b, nvllm):
    sched = KvScheduler.for_model(llama2_7b, derive_breakdown(llama2_7b), nvllm, enabled=True)
    sched.reset(100)
    assert sched.popcount() == 16384

    first = sched.step(101)
    assert first.delta_c == 3841
    assert first.cleared == math.ceil(3841 / 512)
    assert sched.events == 1

    # baseline moved to 101
    again = sched.step(101)
    assert again.delta_c == 0
    assert not again.changed


def test_reset_restores_all_ones(llama2_7b, nvllm):
    sched = KvScheduler.for_model(llama2_7b, derive_breakdown(llama2_7b), nvllm, enabled=True)
    sched.reset(0)
    for kv in range(1, 20):
        sched.step(kv)
    assert sched.popcount() < 16384
    sched.reset(19)
    assert sched.popcount() == 16384
    assert sched.kv_at_last == 19


def test_disabled_session_never_moves(llama2_7b, nvllm):
    sched = KvScheduler.for_model(llama2_7b, derive_breakdown(llama2_7b), nvllm, enabled=False)
    decision = sched.step(5000)
    assert decision.cleared == 0
    assert sched.popcount() == 16384


def test_per_layer_bitmaps_split_the_growth(llama2_7b, nvllm):
    hw = nvllm.with_overrides(sched=replace(nvllm.sched, per_layer_bitmaps=True))
    sched = KvScheduler.for_model(llama2_7b, derive_breakdown(llama2_7b), hw, enabled=True)
    assert len(sched.bitmaps) == llama2_7b.num_layers
    # one token's growth shared by 32 layers stays under each layer's threshold
    assert not sched.step(1).changed
    decision = sched.step(5)
    assert decision.changed
    assert all(sched.npu_columns(l) == sched.npu_columns(0) for l in range(llama2_7b.num_layers))


def test_kv_going_backwards_rejected(llama2_7b, nvllm):
    sched = KvScheduler.for_model(llama2_7b, derive_breakdown(llama2_7b), nvllm, enabled=True)
    sched.reset(10)
    with pytest.raises(ValueError):
        sched.step(9)
