# src/engine/system_sim.py
"""
Discrete-event engine for one inference request.

Each forward pass walks the layer stack stage by stage. A stage hands its
independent resource parts (NPU, DRAM, NAND lanes, IO link) to the event
queue as completion events; the stage ends when its last part completes.
Steady NAND stretches are fast-forwarded with the aggregated lane formula
instead of one event per segment.
"""
from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Dict, List, Tuple

from src.core.errors import CapacityError, UncorrectableSegmentError
from src.core.hw_models import HwConfig, bytes_to_ps, cycles_to_ps, ps_to_cycles
from src.core.llm_models import ComponentBreakdown, ModelSpec, WorkloadTrace
from src.core.models import TokenRecord
from src.ecc.codec import CodeConfig
from src.ecc.faults import FaultModel, sample_read_faults
from src.engine.erdpe import aggregate_lane_cycles
from src.engine.events import EventKind, EventQueue, SimEvent
from src.engine.nand_fabric import (
    HEAD_LAYER,
    WeightLayout,
    aggregate_bandwidth,
    build_layout,
    pages_per_plane,
)
from src.scheduling.kv_scheduler import KvScheduler

log = logging.getLogger(__name__)


def engine_code(model: ModelSpec, hw: HwConfig, code: CodeConfig | None = None) -> CodeConfig:
    base = code or CodeConfig()
    return CodeConfig(
        data_bits_per_subword=base.data_bits_per_subword,
        parity_bits_per_subword=base.parity_bits_per_subword,
        lane_width=hw.nand.lane_width,
        weight_bits=8 * model.bytes_per_weight,
        correction_cycles=base.correction_cycles,
    )


@dataclass
class NandStretch:
    time_ps: int = 0
    lane_ps: int = 0
    cycles: int = 0
    segments: int = 0
    dirty: int = 0
    uncorrectable: int = 0
    nand_bytes: int = 0


@dataclass
class PassTally:
    time_ps: int = 0
    npu_ps: int = 0
    nand_lane_ps: int = 0
    nand_stage_ps: int = 0
    nand_stall_ps: int = 0
    corrected: int = 0
    uncorrectable: int = 0
    nand_bytes: int = 0
    io_bytes: int = 0
    dram_bytes: int = 0
    macs: int = 0


@dataclass
class SystemEngine:
    model: ModelSpec
    bd: ComponentBreakdown
    hw: HwConfig
    code: CodeConfig
    fault: FaultModel = field(default_factory=FaultModel)
    policy: str = "abort"
    record_events: bool = False

    layout: WeightLayout | None = None
    queue: EventQueue = field(default_factory=EventQueue)
    events: List[SimEvent] = field(default_factory=list)
    event_counts: Counter = field(default_factory=Counter)
    clock_ps: int = 0

    def __post_init__(self) -> None:
        nand = self.hw.nand
        self.lanes = self.hw.num_ooo_ecdp_nand
        self.d = nand.lane_width
        self.b = self.model.bytes_per_weight
        self.npu_rate = self.hw.npu_macs_per_s
        self.dram_bw = self.hw.dram.bandwidth_bps
        self.kv_bytes_layer = self.bd.kv_bytes_per_ctx // self.model.num_layers
        self.agg_ops_layer = self.bd.agg_ops_per_ctx // self.model.num_layers

    # -- capacity -----------------------------------------------------------

    def check_capacity(self, trace: WorkloadTrace) -> None:
        self.layout = build_layout(self.model, self.hw.nand, self.code)
        dram_need = self.bd.attention_proj_bytes + self.bd.norm_bytes + self.bd.kv_bytes_per_ctx * trace.max_kv_len
        if dram_need > self.hw.dram.capacity_bytes:
            raise CapacityError(
                f"DRAM capacity exceeded: projections + KV cache for {trace.max_kv_len} tokens need "
                f"{dram_need / 2**30:.2f} GiB, DRAM holds {self.hw.dram.capacity_bytes / 2**30:.2f} GiB",
                matrix="kv_cache",
            )

    # -- event plumbing -----------------------------------------------------

    def _advance(self, parts: List[Tuple[EventKind, int, Dict[str, Any]]]) -> int:
        """Run one stage: every part completes at clock + its duration."""
        start = self.clock_ps
        for kind, dt, payload in parts:
            self.queue.push(start + dt, kind, **payload)
        end = start
        for ev in self.queue.drain():
            self.event_counts[ev.kind.label] += 1
            if self.record_events:
                self.events.append(ev)
            end = ev.timestamp
        self.clock_ps = end
        return end - start

    # -- resource models ----------------------------------------------------

    def npu_gemv(self, columns: int, rows: int, tokens: int) -> Tuple[int, int]:
        """(time ps, DRAM bytes) for a GEMV on NPU lanes with weights streamed from DRAM."""
        if columns <= 0:
            return 0, 0
        if self.npu_rate <= 0:
            raise CapacityError("projection columns assigned to an NPU without ECDP lanes")
        weight_bytes = columns * rows * self.b
        mem = bytes_to_ps(weight_bytes, self.dram_bw) + self.hw.dram.latency_ps
        compute = bytes_to_ps(tokens * columns * rows, self.npu_rate)
        return max(mem, compute), weight_bytes

    def nand_stretch(
        self,
        columns: int,
        rows: int,
        tokens: int,
        layer: int,
        matrix: str,
        read_index: int,
        plane_pages: int | None = None,
    ) -> NandStretch:
        out = NandStretch()
        if columns <= 0:
            return out
        if self.lanes <= 0:
            raise CapacityError(f"no NAND lanes for {matrix}", layer=layer, matrix=matrix)
        code = self.code
        segs_per_col = -(-rows // self.d)
        out.segments = columns * segs_per_col
        s_lane = -(-out.segments // self.lanes)

        if self.fault.rber > 0:
            faults = sample_read_faults(
                self.fault.derive(f"{layer}.{matrix}"),
                read_index,
                out.segments,
                code.segment_codeword_bits,
                code.subword_codeword_bits,
                code.subwords_per_segment,
            )
            out.dirty = faults.dirty_segments
            out.uncorrectable = faults.uncorrectable_segments
            if out.uncorrectable and self.policy == "abort":
                raise UncorrectableSegmentError(faults.first_uncorrectable or 0, layer=layer, matrix=matrix)
        d_lane = -(-out.dirty // self.lanes)

        out.cycles = aggregate_lane_cycles(s_lane, d_lane, code.correction_cycles, tokens)
        out.lane_ps = cycles_to_ps(out.cycles, self.hw.nand.clock_hz)
        pages = plane_pages if plane_pages is not None else pages_per_plane(out.segments, self.hw.nand, code)
        supply = pages * self.hw.nand.read_latency_ps
        if not self.hw.nand.prefetch:
            supply += self.hw.nand.read_latency_ps
        out.time_ps = max(out.lane_ps, supply)
        out.nand_bytes = out.segments * code.segment_codeword_bytes
        return out

    def _layout_pages(self, layer: int, *matrices: str) -> int | None:
        if self.layout is None:
            return None
        return sum(self.layout.max_pages_per_plane(layer, m) for m in matrices)

    # -- stages -------------------------------------------------------------

    def _tally_nand(self, tally: PassTally, s: NandStretch) -> None:
        tally.nand_lane_ps += s.lane_ps
        tally.nand_stage_ps += s.time_ps
        tally.nand_stall_ps += s.time_ps - s.lane_ps
        tally.corrected += s.dirty - s.uncorrectable
        tally.uncorrectable += s.uncorrectable
        tally.nand_bytes += s.nand_bytes

    def _nand_parts(self, s: NandStretch, payload: Dict[str, Any]) -> List[Tuple[EventKind, int, Dict[str, Any]]]:
        parts: List[Tuple[EventKind, int, Dict[str, Any]]] = []
        if s.segments == 0:
            return parts
        first_page = min(self.hw.nand.read_latency_ps, s.time_ps)
        parts.append((EventKind.PAGE_READ_DONE, first_page, payload))
        if s.dirty:
            parts.append((EventKind.CORRECTION_DONE, s.time_ps, {**payload, "dirty": s.dirty}))
        parts.append((EventKind.MAC_COMMIT, s.time_ps, {**payload, "segments": s.segments}))
        return parts

    def projection_stage(
        self, tally: PassTally, layer: int, npu_cols: int, nand_cols: int, tokens: int, read_index: int
    ) -> None:
        h = self.model.d_model
        npu_ps, dram_bytes = self.npu_gemv(npu_cols, h, tokens)
        s = self.nand_stretch(nand_cols, h, tokens, layer, "qkvo_proj", read_index)
        payload = {"layer": layer, "stage": "projection"}
        parts = self._nand_parts(s, payload)
        if npu_cols:
            parts.append((EventKind.DRAM_BURST_DONE, bytes_to_ps(dram_bytes, self.dram_bw), payload))
            parts.append((EventKind.NPU_CHUNK_DONE, npu_ps, {**payload, "columns": npu_cols}))
        dt = self._advance(parts)
        tally.time_ps += dt
        tally.npu_ps += npu_ps
        tally.dram_bytes += dram_bytes
        tally.macs += (npu_cols + nand_cols) * h * tokens
        self._tally_nand(tally, s)

    def aggregation_stage(self, tally: PassTally, layer: int, ctx0: int, tokens: int) -> None:
        """Scores and weighted sum over the KV cache, plus norms/softmax, on the NPU."""
        kv_tokens = ctx0 + tokens
        attended = tokens * ctx0 + tokens * (tokens + 1) // 2
        kv_bytes = kv_tokens * self.kv_bytes_layer
        ops = attended * self.agg_ops_layer + tokens * self.model.d_model
        mem = bytes_to_ps(kv_bytes, self.dram_bw) + self.hw.dram.latency_ps
        compute = bytes_to_ps(ops, 2 * self.npu_rate) if self.npu_rate else 0
        npu_ps = max(mem, compute)
        payload = {"layer": layer, "stage": "aggregation"}
        dt = self._advance([
            (EventKind.DRAM_BURST_DONE, mem, payload),
            (EventKind.NPU_CHUNK_DONE, npu_ps, payload),
        ])
        tally.time_ps += dt
        tally.npu_ps += npu_ps
        tally.dram_bytes += kv_bytes

    def io_stage(self, tally: PassTally, layer: int, num_bytes: int) -> None:
        if num_bytes <= 0:
            return
        dt = self._advance([
            (EventKind.IO_TRANSFER_DONE, bytes_to_ps(num_bytes, self.hw.io.bandwidth_bps),
             {"layer": layer, "bytes": num_bytes}),
        ])
        tally.time_ps += dt
        tally.io_bytes += num_bytes

    def nand_stage(
        self,
        tally: PassTally,
        layer: int,
        matrix: str,
        columns: int,
        rows: int,
        tokens: int,
        read_index: int,
        layout_matrices: Tuple[str, ...] = (),
    ) -> None:
        pages = self._layout_pages(layer, *layout_matrices) if layout_matrices else None
        s = self.nand_stretch(columns, rows, tokens, layer, matrix, read_index, plane_pages=pages)
        dt = self._advance(self._nand_parts(s, {"layer": layer, "stage": matrix}))
        tally.time_ps += dt
        tally.macs += columns * rows * tokens
        self._tally_nand(tally, s)

    # -- forward pass -------------------------------------------------------

    def forward(
        self,
        tokens: int,
        ctx0: int,
        npu_columns: List[int],
        read_index: int,
    ) -> PassTally:
        """
        One forward pass over `tokens` new tokens with `ctx0` tokens already
        cached. npu_columns[l] is the NPU share of layer l's projection columns.
        """
        m = self.model
        h = m.d_model
        act = self.hw.io.activation_bytes
        h_cols = m.q_dim + 2 * m.kv_dim + h
        tally = PassTally()

        for layer in range(m.num_layers):
            npu_cols = npu_columns[layer]
            self.projection_stage(tally, layer, npu_cols, h_cols - npu_cols, tokens, read_index)
            self.aggregation_stage(tally, layer, ctx0, tokens)
            if m.d_ffn:
                # hidden state to the NAND side, FFN output (and flash-side projections) back
                self.io_stage(tally, layer, (2 * h + (h_cols - npu_cols)) * act * tokens)
                up = ("gate_proj", "up_proj") if m.ffn_kind == "gated" else ("up_proj",)
                self.nand_stage(tally, layer, "up_proj", len(up) * m.d_ffn, h, tokens, read_index, up)
                self.nand_stage(tally, layer, "down_proj", h, m.d_ffn, tokens, read_index, ("down_proj",))
            elif h_cols - npu_cols:
                self.io_stage(tally, layer, (h_cols - npu_cols) * act * tokens)

        # LM head for the last token only
        head = "embedding" if m.tied_embeddings else "lm_head"
        self.io_stage(tally, HEAD_LAYER, h * act)
        self.nand_stage(tally, HEAD_LAYER, "lm_head", m.vocab_size, h, 1, read_index, (head,))
        self.io_stage(tally, HEAD_LAYER, m.vocab_size * act)
        return tally

    def record(self, tally: PassTally, **fields: Any) -> TokenRecord:
        nand_clock = self.hw.nand.clock_hz
        self._advance([(EventKind.TOKEN_DONE, 0, {"token_index": fields["token_index"]})])
        stall = tally.nand_stall_ps / tally.nand_stage_ps if tally.nand_stage_ps else 0.0
        row: TokenRecord = {
            "token_index": fields["token_index"],
            "turn": fields["turn"],
            "phase": fields["phase"],
            "tokens": fields["tokens"],
            "kv_len": fields["kv_len"],
            "time_ps": tally.time_ps,
            "cycles_nand": ps_to_cycles(tally.nand_lane_ps, nand_clock),
            "cycles_npu": ps_to_cycles(tally.npu_ps, self.hw.npu_clock_hz),
            "stall_fraction": stall,
            "bitmap_popcount": fields["bitmap_popcount"],
            "sched_cleared": 0,
            "corrected_segments": tally.corrected,
            "uncorrectable_segments": tally.uncorrectable,
            "nand_bytes": tally.nand_bytes,
            "io_bytes": tally.io_bytes,
            "dram_bytes": tally.dram_bytes,
            "macs": tally.macs,
        }
        return row

    # -- request ------------------------------------------------------------

    def prefill_npu_columns(self) -> int:
        share = self.hw.sched.prefill_npu_share
        if share is None:
            nand_rate = self.hw.nand_macs_per_s
            total = self.npu_rate + nand_rate
            share = self.npu_rate / total if total else 0.0
        return int(round(share * self.model.qkvo_columns))

    def run(self, trace: WorkloadTrace, sched: KvScheduler) -> List[TokenRecord]:
        if self.layout is None:
            self.check_capacity(trace)
        rows: List[TokenRecord] = []
        kv = trace.initial_kv_len
        token_index = 0
        read_index = 0
        layers = self.model.num_layers

        for turn, (prefill, decode) in enumerate(trace.turns):
            npu_cols = self.prefill_npu_columns()
            tally = self.forward(prefill, kv, [npu_cols] * layers, read_index)
            kv += prefill
            rows.append(self.record(
                tally, token_index=token_index, turn=turn, phase="prefill", tokens=prefill,
                kv_len=kv, bitmap_popcount=npu_cols,
            ))
            token_index += prefill
            read_index += 1
            # new request: every projection column back on the NPU, growth measured from here
            sched.reset(kv)

            for _ in range(decode):
                cols = [sched.npu_columns(l) for l in range(layers)]
                tally = self.forward(1, kv, cols, read_index)
                kv += 1
                row = self.record(
                    tally, token_index=token_index, turn=turn, phase="decode", tokens=1,
                    kv_len=kv, bitmap_popcount=cols[0] if not sched.per_layer else sum(cols),
                )
                decision = sched.step(kv)
                if decision.changed:
                    self._advance([(EventKind.SCHEDULER_DECISION, 0,
                                    {"kv_len": kv, "cleared": decision.cleared})])
                row["sched_cleared"] = decision.cleared
                rows.append(row)
                token_index += 1
                read_index += 1

            log.debug(f"turn {turn}: prefill {prefill}, decode {decode}, kv now {kv}")
        return rows


def event_log(engine: SystemEngine) -> List[Dict[str, Any]]:
    return [ev.to_dict() for ev in engine.events]


def bandwidth_bound_tps(bd: ComponentBreakdown, hw: HwConfig, code: CodeConfig) -> float:
    """tokens/s ceiling from streaming FFN codewords at the raw NAND bandwidth."""
    bw = aggregate_bandwidth(hw.nand)
    if bd.ffn_bytes == 0 or bw == 0:
        return math.inf
    return bw / (bd.ffn_bytes / code.code_rate)
