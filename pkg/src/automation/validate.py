# src/automation/validate.py
"""
Oracle and identity checks over the whole stack. Each check returns a
CheckResult instead of raising so the full table is always printed.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, List

import numpy as np
import pandas as pd

from src.core.hw_models import hardware_preset, peak_throughput
from src.core.llm_models import ModelSpec
from src.ecc.codec import CodeConfig, SecDedCodec
from src.ecc.faults import FaultModel, inject
from src.engine.erdpe import DotJob, aggregate_lane_cycles, lane_cycles, ooo_ecdp, reference_dot
from src.engine.nand_fabric import (
    NandImage,
    aggregate_bandwidth,
    build_layout,
    segments_per_page,
    stream,
    stream_time,
    uniform_plan,
)
from src.scheduling.kv_scheduler import Bitmap, SchedulerParams, rebalance

log = logging.getLogger(__name__)

ECDP_LENGTHS = (256, 1024, 4096)
ECDP_RBERS = (0.0, 1e-4, 1e-3)


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str = ""


# =========================
# Reference helpers
# =========================

def correctable_pattern(job: DotJob, codec: SecDedCodec, fault: FaultModel, read_index: int) -> bool:
    """Ground truth from the injector: no subword of any segment took two or more flips."""
    data = job.data_bits()
    parity = job.ensure_parity(codec)
    clean = np.concatenate([data, parity], axis=1)
    flips = inject(clean, fault, read_index) ^ clean
    cfg = codec.cfg
    k, p = cfg.data_bits_per_subword, cfg.parity_bits_per_subword
    data_flips = flips[:, : data.shape[1]].reshape(-1, k).sum(axis=1)
    parity_flips = flips[:, data.shape[1]:].reshape(-1, p).sum(axis=1)
    return bool(((data_flips + parity_flips) <= 1).all())


def brute_force_rebalance(delta_c: int, c_npu: int, u: int, p: int, bits: List[bool]) -> List[bool]:
    """Scan-based restatement of the bitmap rebalance."""
    c_th = (p // u) * c_npu
    out = list(bits)
    if delta_c <= c_th:
        return out
    k = 0
    while k * c_th < delta_c:
        k += 1
    i = len(out) - 1
    while k > 0 and i >= 0:
        if out[i]:
            out[i] = False
            k -= 1
        i -= 1
    return out


def toy_model() -> ModelSpec:
    return ModelSpec(name="toy", num_layers=2, d_model=64, d_ffn=128, num_heads=2, head_dim=32, vocab_size=96)


# =========================
# Checks
# =========================

def check_peak_throughput() -> CheckResult:
    got = {name: peak_throughput(hardware_preset(name)) for name in ("NVLLM", "NVLLM-16C")}
    ok = got["NVLLM"] == 307.2e9 and got["NVLLM-16C"] == 486.4e9
    detail = ", ".join(f"{k} {v / 1e9:.1f} GOPS" for k, v in got.items())
    return CheckResult("peak throughput", ok, detail)


def check_bandwidth() -> CheckResult:
    bw = aggregate_bandwidth(hardware_preset("NVLLM").nand)
    ok = bw == 32 * 16384 * 1e12 / 5_120_000
    return CheckResult("NAND bandwidth", ok, f"NVLLM {bw / 1e9:.1f} GB/s (~{round(bw / 1e11) * 100} GB/s)")


def check_ecdp_equivalence(jobs: int = 10_000, seed: int = 0, codec: SecDedCodec | None = None) -> CheckResult:
    codec = codec or SecDedCodec(CodeConfig())
    rng = np.random.default_rng(seed)
    compared = mismatched = 0
    for i in range(jobs):
        h = ECDP_LENGTHS[i % len(ECDP_LENGTHS)]
        rber = ECDP_RBERS[(i // len(ECDP_LENGTHS)) % len(ECDP_RBERS)]
        w = rng.integers(-128, 128, size=h, dtype=np.int8)
        a = rng.integers(-128, 128, size=h, dtype=np.int8)
        job = DotJob(w, a, segment_factor=codec.cfg.lane_width)
        fault = FaultModel(rber=rber, seed=seed, label="ecdp-equivalence")
        if not correctable_pattern(job, codec, fault, i):
            continue
        result = ooo_ecdp(job, codec, fault, read_index=i, policy="proceed")
        compared += 1
        if result.value != reference_dot(w, a):
            mismatched += 1
    ok = compared > 0 and mismatched == 0
    return CheckResult("ECDP equivalence", ok, f"{compared} correctable jobs compared, {mismatched} mismatched")


def check_ecc_exhaustive(codec: SecDedCodec | None = None, seed: int = 0) -> CheckResult:
    codec = codec or SecDedCodec(CodeConfig())
    cfg = codec.cfg
    rng = np.random.default_rng(seed)
    data = rng.integers(0, 2, size=cfg.segment_data_bits, dtype=np.uint8)
    parity = codec.encode(data)
    word = np.concatenate([data, parity])
    n_data = data.size

    singles = np.repeat(word[None, :], word.size, axis=0)
    singles[np.arange(word.size), np.arange(word.size)] ^= 1
    dirty = codec.dirty_batch(singles[:, :n_data], singles[:, n_data:])
    fixed, bad = codec.correct_batch(singles[:, :n_data], singles[:, n_data:])
    single_ok = bool(dirty.all() and not bad.any() and (fixed == data[None, :]).all())

    k, p = cfg.data_bits_per_subword, cfg.parity_bits_per_subword
    doubles = []
    for s in range(cfg.subwords_per_segment):
        local = list(range(s * k, (s + 1) * k)) + list(range(n_data + s * p, n_data + (s + 1) * p))
        for i in range(len(local)):
            for j in range(i + 1, len(local)):
                doubles.append((local[i], local[j]))
    pairs = np.array(doubles)
    flipped = np.repeat(word[None, :], len(pairs), axis=0)
    rows = np.arange(len(pairs))
    flipped[rows, pairs[:, 0]] ^= 1
    flipped[rows, pairs[:, 1]] ^= 1
    dirty2 = codec.dirty_batch(flipped[:, :n_data], flipped[:, n_data:])
    _, bad2 = codec.correct_batch(flipped[:, :n_data], flipped[:, n_data:])
    double_ok = bool(dirty2.all() and bad2.all())

    return CheckResult(
        "ECC exhaustive",
        single_ok and double_ok,
        f"{word.size} single flips {'corrected' if single_ok else 'FAILED'}, "
        f"{len(pairs)} in-subword double flips {'flagged' if double_ok else 'FAILED'}",
    )


def check_scheduler(instances: int = 10_000, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    mismatched = 0
    for _ in range(instances):
        h = int(rng.integers(1, 65))
        u = int(rng.integers(1, 4097))
        p = int(rng.integers(u, 65_537))
        c_npu = int(rng.integers(1, 65))
        c_th = (p // u) * c_npu
        delta = int(rng.integers(0, 4 * c_th * h + 2))
        bits = rng.integers(0, 2, size=h).astype(bool)
        got = rebalance(delta, SchedulerParams(c_npu=c_npu, u=u, p=p), Bitmap(bits))
        want = brute_force_rebalance(delta, c_npu, u, p, bits.tolist())
        if got.bits.tolist() != want:
            mismatched += 1
    return CheckResult("scheduler brute force", mismatched == 0, f"{instances} instances, {mismatched} mismatched")


def check_lane_formula(cases: int = 500, seed: int = 0) -> CheckResult:
    """Closed form is exact without corrections and within one correction latency otherwise."""
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(cases):
        segments = int(rng.integers(1, 512))
        dirty = int(rng.integers(0, segments + 1))
        c = int(rng.integers(1, 17))
        mask = np.zeros(segments, dtype=bool)
        mask[(np.arange(dirty) * segments) // max(dirty, 1)] = True
        exact = lane_cycles(mask, c)
        closed = aggregate_lane_cycles(segments, dirty, c)
        if dirty == 0:
            bad += exact != closed
        else:
            bad += not (closed <= exact <= closed + c)
    return CheckResult("lane cycle formula", bad == 0, f"{cases} evenly spread masks, {bad} out of bounds")


def check_stream_identity() -> CheckResult:
    hw = hardware_preset("NVLLM")
    code = CodeConfig(lane_width=hw.nand.lane_width)
    spp = segments_per_page(hw.nand, code)
    bad = []
    for pages in (1, 4, 16):
        for rate in (None, hw.nand.clock_hz / 8):
            plan = uniform_plan(hw.nand, pages, spp, clusters=1)
            result = stream(plan, hw.nand, code, lane_segments_per_s=rate)
            drain = int(round(spp * 1e12 / (rate or hw.nand.clock_hz)))
            expected = stream_time(pages, hw.nand.planes_per_cluster, hw.nand.read_latency_ps, drain)
            if result.finish_ps != expected:
                bad.append(f"{pages}p@{rate or 'clk'}: {result.finish_ps} != {expected}")
    return CheckResult("page stream timing", not bad, "; ".join(bad) or "uniform plans match the closed form")


def check_layout_round_trip(seed: int = 0) -> CheckResult:
    model = toy_model()
    hw = hardware_preset("NVLLM")
    code = CodeConfig(lane_width=hw.nand.lane_width)
    layout = build_layout(model, hw.nand, code)
    image = NandImage(layout)
    rng = np.random.default_rng(seed)
    failures = []
    for (layer, name), shape in layout.shapes.items():
        w = rng.integers(-128, 128, size=(shape.columns, shape.rows), dtype=np.int8)
        image.store(layer, name, w)
        back = image.load(layer, name, np.int8, fault=FaultModel(rber=1e-5, seed=seed, label=name))
        if not np.array_equal(back, w):
            failures.append(f"{layer}.{name}")
    detail = f"{len(layout.shapes)} matrices" + (f", corrupted: {', '.join(failures)}" if failures else "")
    return CheckResult("layout round trip", not failures, detail)


# =========================
# Suite
# =========================

def run_validation(
    *,
    ecdp_jobs: int = 10_000,
    scheduler_instances: int = 10_000,
    seed: int = 0,
    disable_correction: bool = False,
) -> List[CheckResult]:
    codec = SecDedCodec(CodeConfig(), correction_enabled=not disable_correction)
    checks: List[Callable[[], CheckResult]] = [
        check_peak_throughput,
        check_bandwidth,
        lambda: check_ecc_exhaustive(codec, seed),
        lambda: check_ecdp_equivalence(ecdp_jobs, seed, codec),
        lambda: check_scheduler(scheduler_instances, seed),
        lambda: check_lane_formula(seed=seed),
        check_stream_identity,
        lambda: check_layout_round_trip(seed),
    ]
    results = []
    for check in checks:
        try:
            result = check()
        except Exception as e:
            result = CheckResult(getattr(check, "__name__", "check"), False, f"raised {type(e).__name__}: {e}")
        log.info(f"{result.name}: {'ok' if result.ok else 'FAIL'} ({result.detail})")
        results.append(result)
    return results


def format_report(results: List[CheckResult]) -> str:
    frame = pd.DataFrame(
        [{"check": r.name, "status": "PASS" if r.ok else "FAIL", "detail": r.detail} for r in results],
        columns=["check", "status", "detail"],
    )
    return frame.to_string(index=False)


def all_passed(results: List[CheckResult]) -> bool:
    return bool(results) and all(r.ok for r in results)
