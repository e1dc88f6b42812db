# src/scheduling/kv_scheduler.py
"""
KV-cache-aware split of the attention projection columns between the NPU
and the NAND side.

Decode starts with every Q/K/V/O column on the NPU (bitmap all ones). As
the KV cache grows, the NPU's attention work grows with it; once the
predicted growth exceeds what one page-buffer's worth of columns costs on
the NPU, the highest-indexed NPU columns move to NAND.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, List, Tuple

import numpy as np

from src.core.errors import ConfigError
from src.core.hw_models import HwConfig
from src.core.llm_models import ComponentBreakdown, ModelSpec

log = logging.getLogger(__name__)


class Bitmap:
    """1 = column executed on the NPU, 0 = executed in flash. Immutable."""

    __slots__ = ("_bits",)

    def __init__(self, bits: Iterable[bool] | np.ndarray) -> None:
        arr = np.array(bits, dtype=bool).reshape(-1)
        arr.setflags(write=False)
        self._bits = arr

    @classmethod
    def ones(cls, h: int) -> "Bitmap":
        return cls(np.ones(h, dtype=bool))

    @classmethod
    def zeros(cls, h: int) -> "Bitmap":
        return cls(np.zeros(h, dtype=bool))

    @classmethod
    def from_string(cls, s: str) -> "Bitmap":
        if any(ch not in "01" for ch in s):
            raise ValueError(f"bitmap string must be 0/1 only: {s!r}")
        return cls([ch == "1" for ch in s])

    @property
    def bits(self) -> np.ndarray:
        return self._bits

    def popcount(self) -> int:
        return int(self._bits.sum())

    def __len__(self) -> int:
        return int(self._bits.size)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Bitmap) and np.array_equal(self._bits, other._bits)

    def __hash__(self) -> int:
        return hash(self._bits.tobytes())

    def __str__(self) -> str:
        return "".join("1" if b else "0" for b in self._bits)

    def __repr__(self) -> str:
        return f"Bitmap({self})" if len(self) <= 64 else f"Bitmap(H={len(self)}, ones={self.popcount()})"


@dataclass(frozen=True)
class SchedulerParams:
    c_npu: int      # NPU cycles per column
    u: int          # bytes per weight column
    p: int          # page-buffer bytes per plane cluster

    def __post_init__(self) -> None:
        for name in ("c_npu", "u", "p"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"sched.{name}", "must be > 0")
        if self.u > self.p:
            raise ConfigError("sched.u", f"column size {self.u} B exceeds the cluster page buffer {self.p} B")

    @property
    def threshold(self) -> int:
        """C_th: NPU cycles worth one page-buffer load of columns."""
        return (self.p // self.u) * self.c_npu


def rebalance(delta_c: int, params: SchedulerParams, bitmap: Bitmap) -> Bitmap:
    if delta_c <= params.threshold:
        return bitmap
    k = math.ceil(delta_c / params.threshold)
    ones = np.flatnonzero(bitmap.bits)
    if ones.size == 0:
        return bitmap
    bits = bitmap.bits.copy()
    bits[ones[-k:]] = False
    return Bitmap(bits)


def split_columns(bitmap: Bitmap) -> Tuple[List[int], List[int]]:
    bits = bitmap.bits
    return np.flatnonzero(bits).tolist(), np.flatnonzero(~bits).tolist()


def projection_columns(model: ModelSpec) -> int:
    """H: output columns of Q, K, V and O together."""
    return model.q_dim + 2 * model.kv_dim + model.d_model


def derive_params(model: ModelSpec, hw: HwConfig) -> SchedulerParams:
    u = model.d_model * model.bytes_per_weight
    p = hw.nand.planes_per_cluster * hw.nand.page_bytes
    c_npu = hw.sched.c_npu_cycles
    if c_npu is None:
        lanes = max(hw.num_ooo_ecdp_npu * hw.npu_lane_width, 1)
        c_npu = -(-model.d_model // lanes)
    return SchedulerParams(c_npu=c_npu, u=u, p=p)


def per_context_cycles(bd: ComponentBreakdown, hw: HwConfig) -> int:
    """NPU cycles one more context token adds to a decode step's attention aggregation."""
    f = hw.npu_clock_hz
    mem = bd.kv_bytes_per_ctx * f / hw.dram.bandwidth_bps
    rate = hw.npu_macs_per_s
    compute = bd.agg_ops_per_ctx * f / (2 * rate) if rate else 0.0
    return math.ceil(max(mem, compute))


def estimate_delta_cycles(
    kv_len_now: int,
    kv_len_prev: int,
    bd: ComponentBreakdown | None = None,
    hw: HwConfig | None = None,
    *,
    per_context: int | None = None,
) -> int:
    """Delta C for the KV growth since the last rebalance. `per_context` skips re-deriving the slope."""
    if kv_len_now < kv_len_prev:
        raise ValueError(f"kv length went backwards: {kv_len_prev} -> {kv_len_now}")
    if per_context is None:
        if bd is None or hw is None:
            raise ValueError("need a breakdown and hardware config, or per_context")
        per_context = per_context_cycles(bd, hw)
    return (kv_len_now - kv_len_prev) * per_context


@dataclass
class SchedDecision:
    kv_len: int
    delta_c: int
    cleared: int
    popcount: int

    @property
    def changed(self) -> bool:
        return self.cleared > 0


@dataclass
class KvScheduler:
    """
    Decode-session state: the bitmap(s) and the KV length at the last
    rebalance that changed them. One shared bitmap by default; with
    per_layer, every layer owns a bitmap driven by its share of the growth.
    """
    params: SchedulerParams
    columns: int
    num_layers: int
    per_context: int
    enabled: bool = True
    per_layer: bool = False
    kv_at_last: int = 0
    bitmaps: List[Bitmap] = field(default_factory=list)
    events: int = 0

    @classmethod
    def for_model(cls, model: ModelSpec, bd: ComponentBreakdown, hw: HwConfig, enabled: bool | None = None) -> "KvScheduler":
        sched = cls(
            params=derive_params(model, hw),
            columns=projection_columns(model),
            num_layers=model.num_layers,
            per_context=per_context_cycles(bd, hw),
            enabled=hw.sched.enabled if enabled is None else enabled,
            per_layer=hw.sched.per_layer_bitmaps,
        )
        sched.reset(0)
        return sched

    def reset(self, kv_len: int) -> None:
        count = self.num_layers if self.per_layer else 1
        self.bitmaps = [Bitmap.ones(self.columns) for _ in range(count)]
        self.kv_at_last = kv_len

    def bitmap(self, layer: int) -> Bitmap:
        return self.bitmaps[layer if self.per_layer else 0]

    def npu_columns(self, layer: int) -> int:
        return self.bitmap(layer).popcount()

    def popcount(self) -> int:
        return sum(b.popcount() for b in self.bitmaps)

    def step(self, kv_len: int) -> SchedDecision:
        """Runs once at the end of every decode forward pass."""
        if not self.enabled:
            return SchedDecision(kv_len, 0, 0, self.popcount())
        delta = estimate_delta_cycles(kv_len, self.kv_at_last, per_context=self.per_context)
        before = self.popcount()
        if self.per_layer:
            share = -(-delta // self.num_layers)
            self.bitmaps = [rebalance(share, self.params, b) for b in self.bitmaps]
        else:
            self.bitmaps = [rebalance(delta, self.params, self.bitmaps[0])]
        after = self.popcount()
        if after != before:
            self.kv_at_last = kv_len
            self.events += 1
            log.debug(f"kv={kv_len} delta_c={delta} moved {before - after} column(s) to flash, {after} left on NPU")
        return SchedDecision(kv_len, delta, before - after, after)
