# src/core/models.py
from __future__ import annotations
from dataclasses import asdict, dataclass, field

from typing import Any, Dict, List, TypedDict


# =========================
# Per-pass trace rows
# =========================

class TokenRecord(TypedDict):
    """
    One forward pass. A decode pass produces one token; a prefill pass
    carries every prompt token (tokens = prompt length).
    """
    token_index: int            # index of the first token the pass covers
    turn: int
    phase: str                  # "prefill" | "decode"
    tokens: int
    kv_len: int                 # context length the pass attends over, incl. its own tokens
    time_ps: int
    cycles_nand: int            # NAND-CMOS busy cycles
    cycles_npu: int             # NPU busy cycles
    stall_fraction: float       # share of NAND stage time with lanes starved for pages
    bitmap_popcount: int        # NPU-side projection columns during the pass
    sched_cleared: int          # columns moved to flash by the rebalance after the pass
    corrected_segments: int
    uncorrectable_segments: int
    nand_bytes: int             # codeword bytes read from the array
    io_bytes: int               # activations across NAND CMOS <-> NPU
    dram_bytes: int             # projection weights + KV traffic
    macs: int


TOKEN_FIELDS: List[str] = list(TokenRecord.__annotations__.keys())


class PathEnergy(TypedDict):
    nand: float
    io: float
    dram: float


# =========================
# Run summary
# =========================

@dataclass
class Metrics:
    tokens_per_second: float = 0.0
    seconds_per_inference: float = 0.0
    prefill_seconds: float = 0.0
    decode_seconds: float = 0.0
    prefill_fraction: float = 0.0
    energy_joules_per_token: float = 0.0
    path_energy: Dict[str, float] = field(default_factory=lambda: {"nand": 0.0, "io": 0.0, "dram": 0.0})
    data_movement_joules: float = 0.0
    mac_joules: float = 0.0
    static_joules: float = 0.0
    total_joules: float = 0.0
    stall_fraction: float = 0.0
    corrected_segments: int = 0
    uncorrectable_segments: int = 0
    scheduler_events: int = 0
    prefill_tokens: int = 0
    decode_tokens: int = 0
    total_macs: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Metrics":
        known = set(cls.__dataclass_fields__)
        return cls(**{k: v for k, v in data.items() if k in known})


@dataclass
class SimResult:
    summary: Metrics
    tokens: List[TokenRecord]
    # identity of the run: model, hardware, seed, rber, ...
    run_info: Dict[str, Any] = field(default_factory=dict)
    event_counts: Dict[str, int] = field(default_factory=dict)
    # SimEvent log, filled only when events are recorded
    events: List[Any] = field(default_factory=list)
