# src/core/simulate.py

import logging
from typing import Any, Dict

from src.core.energy import energy_report
from src.core.hw_models import HwConfig
from src.core.llm_models import ModelSpec, WorkloadTrace
from src.core.metrics import compute_metrics
from src.core.models import SimResult
from src.core.workload import derive_breakdown
from src.ecc.codec import CodeConfig
from src.ecc.faults import FaultModel
from src.engine.erdpe import POLICIES
from src.engine.system_sim import SystemEngine, engine_code
from src.scheduling.kv_scheduler import KvScheduler

log = logging.getLogger(__name__)


def run_inference(
    model: ModelSpec,
    trace: WorkloadTrace,
    hw: HwConfig,
    code: CodeConfig | None = None,
    fault: FaultModel | None = None,
    sched_enabled: bool | None = None,
    *,
    policy: str = "abort",
    record_events: bool = False,
) -> SimResult:
    """
    Simulate one request: per turn a prefill pass then one decode pass per
    generated token. Raises CapacityError before any pass when the model
    does not fit, UncorrectableSegmentError under the "abort" policy.
    """
    if policy not in POLICIES:
        raise ValueError(f"Unknown uncorrectable policy: {policy}")
    fault = fault or FaultModel()
    bd = derive_breakdown(model)
    engine = SystemEngine(
        model=model,
        bd=bd,
        hw=hw,
        code=engine_code(model, hw, code),
        fault=fault,
        policy=policy,
        record_events=record_events,
    )
    engine.check_capacity(trace)
    sched = KvScheduler.for_model(model, bd, hw, enabled=sched_enabled)

    log.info(
        f"Simulating {model.name} on {hw.name}: {len(trace.turns)} turn(s), "
        f"{trace.prefill_tokens} prefill / {trace.decode_tokens} decode tokens, rber={fault.rber}"
    )
    tokens = engine.run(trace, sched)
    energy = energy_report(tokens, hw.energy)
    summary = compute_metrics(tokens, energy, scheduler_events=sched.events)

    run_info: Dict[str, Any] = {
        "model": model.name,
        "hardware": hw.name,
        "seed": fault.seed,
        "rber": fault.rber,
        "policy": policy,
        "sched_enabled": sched.enabled,
        "turns": [list(t) for t in trace.turns],
    }
    result = SimResult(
        summary=summary,
        tokens=tokens,
        run_info=run_info,
        event_counts=dict(sorted(engine.event_counts.items())),
        events=engine.events if record_events else [],
    )
    log.info(
        f"{model.name} on {hw.name}: {summary.tokens_per_second:.3f} tok/s, "
        f"{summary.seconds_per_inference:.3f} s/inf, prefill {summary.prefill_fraction:.1%}"
    )
    return result


def decode_energy(model: ModelSpec, hw: HwConfig, ctx: int, code: CodeConfig | None = None) -> Dict[str, float]:
    """Per-path joules of one decode token attending over `ctx` cached tokens plus itself."""
    trace = WorkloadTrace.single(1, 1, initial_kv_len=max(ctx - 1, 0))
    result = run_inference(model, trace, hw, code, sched_enabled=False)
    decode_rows = [r for r in result.tokens if r["phase"] == "decode"]
    return energy_report(decode_rows, hw.energy)
