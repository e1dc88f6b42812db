# src/engine/erdpe.py
"""
Error-resilient dot-product engine (functional model).

A dot product is consumed segment by segment (d weights per cycle). Each
raw segment is checked as it arrives: clean segments commit immediately,
dirty ones go to the scoreboard and the corrector while the lane moves on
to the next buffered segment. Corrected segments commit in a deferred pass
at the end of the job, in ascending segment index.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Mapping, Sequence

import numpy as np

from src.core.errors import ScoreboardError, UncorrectableSegmentError
from src.ecc.codec import Codec, from_bits, to_bits
from src.ecc.faults import FaultModel, inject

log = logging.getLogger(__name__)

POLICIES = ("abort", "proceed")


# =========================
# BF16 helpers
# =========================

def bf16_to_f32(values: np.ndarray) -> np.ndarray:
    u = np.asarray(values, dtype=np.uint16).astype(np.uint32) << 16
    return u.view(np.float32)


def f32_to_bf16(values: np.ndarray) -> np.ndarray:
    """Round-to-nearest-even truncation of float32 to BF16 bit patterns."""
    bits = np.asarray(values, dtype=np.float32).view(np.uint32).astype(np.uint64)
    rounding = ((bits >> 16) & 1) + 0x7FFF
    return ((bits + rounding) >> 16).astype(np.uint16)


def _is_bf16(arr: np.ndarray) -> bool:
    return arr.dtype == np.uint16


def _as_compute(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr)
    if _is_bf16(arr):
        return bf16_to_f32(arr)
    if np.issubdtype(arr.dtype, np.floating):
        return arr.astype(np.float32)
    return arr.astype(np.int64)


# =========================
# Types
# =========================

@dataclass
class DotJob:
    weights: np.ndarray            # int8, or uint16 BF16 bit patterns
    activations: np.ndarray        # int8 / int, or float32 / BF16 patterns
    segment_factor: int = 32
    parity: np.ndarray | None = None   # (segments, parity bits), filled at first encode

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights)
        self.activations = np.asarray(self.activations)
        if self.weights.ndim != 1 or self.activations.ndim != 1:
            raise ValueError("weights and activations must be 1-D")
        if self.weights.size != self.activations.size:
            raise ValueError(
                f"length mismatch: {self.weights.size} weights vs {self.activations.size} activations"
            )
        if self.weights.dtype not in (np.int8, np.uint16):
            raise ValueError(f"weights must be int8 or uint16 BF16 patterns (got {self.weights.dtype})")
        if self.segment_factor <= 0:
            raise ValueError("segment_factor must be > 0")
        pad = (-self.weights.size) % self.segment_factor
        if pad:
            # padding segments hold zero weights and zero activations
            self.weights = np.concatenate([self.weights, np.zeros(pad, dtype=self.weights.dtype)])
            self.activations = np.concatenate(
                [self.activations, np.zeros(pad, dtype=self.activations.dtype)]
            )

    @property
    def precision(self) -> str:
        return "BF16" if _is_bf16(self.weights) else "INT8"

    @property
    def weight_bits(self) -> int:
        return 16 if _is_bf16(self.weights) else 8

    @property
    def num_segments(self) -> int:
        return self.weights.size // self.segment_factor

    def weight_segments(self) -> np.ndarray:
        return self.weights.reshape(self.num_segments, self.segment_factor)

    def activation_segments(self) -> np.ndarray:
        return _as_compute(self.activations).reshape(self.num_segments, self.segment_factor)

    def data_bits(self) -> np.ndarray:
        return to_bits(self.weights).reshape(self.num_segments, -1)

    def ensure_parity(self, codec: Codec) -> np.ndarray:
        if self.parity is None:
            self.parity = codec.encode_batch(self.data_bits())
        return self.parity


class SegmentState(str, Enum):
    AWAITING_CORRECTION = "AwaitingCorrection"   # valid bit 1
    CHECKED = "Checked"                          # valid bit 0


class Scoreboard:
    """Segments of one dot product whose commit is deferred."""

    def __init__(self) -> None:
        self._entries: Dict[int, SegmentState] = {}

    def insert(self, index: int) -> None:
        if index in self._entries:
            raise ScoreboardError(f"segment {index} already on the scoreboard")
        self._entries[index] = SegmentState.AWAITING_CORRECTION

    def mark_checked(self, index: int) -> None:
        if index not in self._entries:
            raise ScoreboardError(f"segment {index} is not on the scoreboard")
        self._entries[index] = SegmentState.CHECKED

    def drop(self, index: int) -> None:
        self._entries.pop(index, None)

    def state(self, index: int) -> SegmentState | None:
        return self._entries.get(index)

    def valid_bit(self, index: int) -> int:
        return 1 if self._entries.get(index) == SegmentState.AWAITING_CORRECTION else 0

    def pending(self) -> List[int]:
        return sorted(self._entries)

    def clear(self) -> None:
        self._entries.clear()

    def is_empty(self) -> bool:
        return not self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, index: int) -> bool:
        return index in self._entries


@dataclass
class DotStats:
    segments_total: int = 0
    segments_dirty: int = 0
    segments_corrected: int = 0
    segments_uncorrectable: int = 0
    deferred_commits: int = 0
    immediate_commits: int = 0
    masked_drops: int = 0


@dataclass
class DotResult:
    value: int | float
    stats: DotStats = field(default_factory=DotStats)
    corrupted: bool = False


class _Accumulator:
    """INT8 jobs accumulate exactly; BF16 jobs in FP32, optionally Kahan-compensated."""

    def __init__(self, floating: bool, compensated: bool = False) -> None:
        self.floating = floating
        self.compensated = compensated
        self.total = np.float32(0.0) if floating else 0
        self._c = np.float32(0.0)

    def add(self, x) -> None:
        if not self.floating:
            self.total += int(x)
        elif self.compensated:
            y = np.float32(np.float32(x) - self._c)
            t = np.float32(self.total + y)
            self._c = np.float32(np.float32(t - self.total) - y)
            self.total = t
        else:
            self.total = np.float32(self.total + np.float32(x))

    @property
    def value(self) -> int | float:
        return float(self.total) if self.floating else int(self.total)


def _segment_partials(weights: np.ndarray, activations: np.ndarray) -> np.ndarray:
    w = _as_compute(weights)
    if np.issubdtype(w.dtype, np.floating):
        prod = w * activations.astype(np.float32)
        return np.cumsum(prod, axis=-1, dtype=np.float32)[..., -1]
    return (w * activations.astype(np.int64)).sum(axis=-1)


# =========================
# Operations
# =========================

def reference_dot(weights: Sequence | np.ndarray, activations: Sequence | np.ndarray) -> int | float:
    """Plain in-order dot product; the correctness oracle."""
    w = np.asarray(weights)
    a = np.asarray(activations)
    if w.shape != a.shape or w.ndim != 1:
        raise ValueError(f"length mismatch: {w.shape} vs {a.shape}")
    wc, ac = _as_compute(w), _as_compute(a)
    if np.issubdtype(wc.dtype, np.floating) or np.issubdtype(ac.dtype, np.floating):
        prod = wc.astype(np.float32) * ac.astype(np.float32)
        return float(np.cumsum(prod, dtype=np.float32)[-1]) if prod.size else 0.0
    return int(np.dot(wc, ac))


def deferred_commit(
    scoreboard: Scoreboard,
    corrected_segments: Mapping[int, np.ndarray],
    activations: np.ndarray,
    *,
    compensated: bool = False,
) -> int | float:
    """
    Commit every scoreboard entry in ascending segment index and empty the
    scoreboard. `activations` is the (segments, d) activation matrix.
    """
    pending = scoreboard.pending()
    floating = np.issubdtype(np.asarray(activations).dtype, np.floating)
    acc = _Accumulator(floating, compensated)
    for idx in pending:
        if idx not in corrected_segments:
            raise ScoreboardError(f"no corrected data for deferred segment {idx}")
        if scoreboard.state(idx) != SegmentState.CHECKED:
            raise ScoreboardError(f"segment {idx} still awaiting correction")
        w = np.asarray(corrected_segments[idx])
        floating = floating or _is_bf16(w)
        acc.floating = floating
        acc.add(_segment_partials(w, np.asarray(activations[idx])))
    scoreboard.clear()
    return acc.value


def ooo_ecdp(
    job: DotJob,
    codec: Codec,
    fault_model: FaultModel,
    *,
    read_index: int = 0,
    policy: str = "abort",
    exact: bool = False,
    order: Sequence[int] | None = None,
) -> DotResult:
    """
    Segments are visited in `order` (index order by default); deferred
    entries always commit in ascending index.
    """
    if policy not in POLICIES:
        raise ValueError(f"Unknown uncorrectable policy: {policy}")
    cfg = codec.cfg
    if cfg.lane_width != job.segment_factor or cfg.weight_bits != job.weight_bits:
        cfg = cfg.for_precision(job.weight_bits)
        if cfg.lane_width != job.segment_factor:
            raise ValueError(
                f"codec lane width {cfg.lane_width} != job segment factor {job.segment_factor}"
            )

    segments = job.num_segments
    data = job.data_bits()
    parity = job.ensure_parity(codec)
    data_len = data.shape[1]

    raw = inject(np.concatenate([data, parity], axis=1), fault_model, read_index)
    raw_data, raw_parity = raw[:, :data_len], raw[:, data_len:]

    dirty = codec.dirty_batch(raw_data, raw_parity)
    dtype = job.weights.dtype
    raw_w = from_bits(raw_data.reshape(-1), dtype).reshape(segments, job.segment_factor)
    acts = job.activation_segments()
    partials = _segment_partials(raw_w, acts)

    fixed_rows: Dict[int, np.ndarray] = {}
    bad_rows: Dict[int, bool] = {}
    dirty_idx = np.nonzero(dirty)[0]
    if dirty_idx.size:
        fixed, bad = codec.correct_batch(raw_data[dirty_idx], raw_parity[dirty_idx])
        fixed_w = from_bits(fixed.reshape(-1), dtype).reshape(dirty_idx.size, job.segment_factor)
        for row, idx in enumerate(dirty_idx.tolist()):
            fixed_rows[idx] = fixed_w[row]
            bad_rows[idx] = bool(bad[row])

    stats = DotStats(segments_total=segments, segments_dirty=int(dirty_idx.size))
    acc = _Accumulator(job.precision == "BF16", exact)
    board = Scoreboard()
    corrected: Dict[int, np.ndarray] = {}
    corrupted = False

    visit = list(range(segments)) if order is None else [int(i) for i in order]
    if sorted(visit) != list(range(segments)):
        raise ValueError(f"order must be a permutation of {segments} segment indices")

    for idx in visit:
        if not dirty[idx]:
            acc.add(partials[idx])
            stats.immediate_commits += 1
            continue

        # lane bypasses to the next buffered segment; corrector owns this one
        board.insert(idx)
        if bad_rows[idx]:
            stats.segments_uncorrectable += 1
            if policy == "abort":
                raise UncorrectableSegmentError(idx)
            corrupted = True
        else:
            stats.segments_corrected += 1

        fixed_w = fixed_rows[idx]
        if np.array_equal(fixed_w, raw_w[idx]):
            # masked buffer: corrector output equals the raw read, entry retires
            board.drop(idx)
            acc.add(partials[idx])
            stats.masked_drops += 1
        else:
            board.mark_checked(idx)
            corrected[idx] = fixed_w

    stats.deferred_commits = len(board)
    if not board.is_empty():
        acc.add(deferred_commit(board, corrected, acts, compensated=exact))

    if corrupted:
        log.debug(f"dot product committed {stats.segments_uncorrectable} uncorrectable segment(s)")
    return DotResult(value=acc.value, stats=stats, corrupted=corrupted)


def gemv_decompose(
    weight_matrix: np.ndarray,
    activation: np.ndarray,
    segment_factor: int = 32,
) -> List[DotJob]:
    """One DotJob per output element; row r holds output r's weights contiguously."""
    w = np.asarray(weight_matrix)
    a = np.asarray(activation)
    if w.ndim != 2 or a.ndim != 1 or w.shape[1] != a.size:
        raise ValueError(f"shape mismatch: matrix {w.shape} vs activation {a.shape}")
    return [DotJob(weights=w[r].copy(), activations=a.copy(), segment_factor=segment_factor) for r in range(w.shape[0])]


def run_gemv(
    jobs: Sequence[DotJob],
    codec: Codec,
    fault_model: FaultModel,
    *,
    base_read_index: int = 0,
    policy: str = "abort",
) -> List[DotResult]:
    return [
        ooo_ecdp(job, codec, fault_model, read_index=base_read_index + i, policy=policy)
        for i, job in enumerate(jobs)
    ]


# =========================
# Lane timing
# =========================

def lane_cycles(dirty_mask: Sequence[bool] | np.ndarray, correction_cycles: int) -> int:
    """
    Cycle-exact timing of one lane over one dot product. The fly-weight
    register feeds one segment per cycle; a single non-pipelined corrector
    per lane takes `correction_cycles` per dirty segment; each deferred
    commit takes one cycle once its correction is done.
    """
    mask = np.asarray(dirty_mask, dtype=bool)
    segments = int(mask.size)
    corrector_free = 0
    done: List[int] = []
    for i in np.nonzero(mask)[0].tolist():
        start = max(i + 1, corrector_free)
        corrector_free = start + correction_cycles
        done.append(corrector_free)
    t = segments
    for finish in done:
        t = max(t, finish) + 1
    return t


def aggregate_lane_cycles(segments: int, dirty: int, correction_cycles: int, tokens: int = 1) -> int:
    """
    Closed-form lane_cycles for a long stretch with `dirty` evenly spread
    segments. Segments are fetched once and reused by `tokens` passes;
    corrections and deferred commits happen once per fetched segment.
    """
    main = tokens * segments
    if dirty <= 0:
        return main
    return max(main + dirty, correction_cycles * dirty + 2)
