# src/core/metrics.py

from typing import Dict, List

from src.core.hw_models import PS_PER_S
from src.core.models import Metrics, TokenRecord


def compute_metrics(tokens: List[TokenRecord], energy: Dict[str, float], scheduler_events: int = 0) -> Metrics:
    if not tokens:
        return Metrics()

    prefill_ps = sum(r["time_ps"] for r in tokens if r["phase"] == "prefill")
    decode_ps = sum(r["time_ps"] for r in tokens if r["phase"] == "decode")
    prefill_tokens = sum(r["tokens"] for r in tokens if r["phase"] == "prefill")
    decode_tokens = sum(r["tokens"] for r in tokens if r["phase"] == "decode")

    prefill_s = prefill_ps / PS_PER_S
    decode_s = decode_ps / PS_PER_S
    total_s = (prefill_ps + decode_ps) / PS_PER_S

    # stall share weighted by each pass's time
    weighted = sum(r["stall_fraction"] * r["time_ps"] for r in tokens)
    total_ps = prefill_ps + decode_ps

    per_token = decode_tokens or prefill_tokens

    return Metrics(
        tokens_per_second=decode_tokens / decode_s if decode_s > 0 else 0.0,
        seconds_per_inference=total_s,
        prefill_seconds=prefill_s,
        decode_seconds=decode_s,
        prefill_fraction=prefill_s / total_s if total_s > 0 else 0.0,
        energy_joules_per_token=energy.get("total", 0.0) / per_token if per_token else 0.0,
        path_energy={k: energy.get(k, 0.0) for k in ("nand", "io", "dram")},
        data_movement_joules=energy.get("data_movement", 0.0),
        mac_joules=energy.get("mac", 0.0),
        static_joules=energy.get("static", 0.0),
        total_joules=energy.get("total", 0.0),
        stall_fraction=weighted / total_ps if total_ps else 0.0,
        corrected_segments=sum(r["corrected_segments"] for r in tokens),
        uncorrectable_segments=sum(r["uncorrectable_segments"] for r in tokens),
        scheduler_events=scheduler_events,
        prefill_tokens=prefill_tokens,
        decode_tokens=decode_tokens,
        total_macs=sum(r["macs"] for r in tokens),
    )
