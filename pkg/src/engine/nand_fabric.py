# src/engine/nand_fabric.py
"""
Timing and layout model of the NAND side: planes grouped into clusters,
page buffers, one FIFO per cluster and the lane that drains it.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Dict, Iterable, List, Sequence, Tuple

import numpy as np

from src.core.errors import CapacityError
from src.core.hw_models import PS_PER_S, NandConfig
from src.core.llm_models import ModelSpec
from src.ecc.codec import CodeConfig, SecDedCodec, from_bits, to_bits
from src.ecc.faults import FaultModel, inject
from src.engine.events import EventKind, EventQueue, SimEvent

log = logging.getLogger(__name__)

HEAD_LAYER = -1     # embedding / positional table / LM head


def aggregate_bandwidth(cfg: NandConfig) -> float:
    """Raw page bandwidth of every plane reading back to back, bytes/s."""
    return cfg.num_planes * cfg.page_bytes * PS_PER_S / cfg.read_latency_ps


def segments_per_page(cfg: NandConfig, code: CodeConfig) -> int:
    return cfg.page_bytes // code.segment_codeword_bytes


def page_payload_bytes(cfg: NandConfig, code: CodeConfig) -> int:
    return segments_per_page(cfg, code) * code.segment_data_bytes


def pages_for_segments(segments: int, spp: int) -> int:
    return -(-segments // spp) if segments > 0 else 0


def pages_per_plane(segments: int, cfg: NandConfig, code: CodeConfig) -> int:
    """Busiest plane's page count when `segments` are striped over every plane."""
    if segments <= 0 or cfg.num_planes == 0:
        return 0
    pages = pages_for_segments(segments, segments_per_page(cfg, code))
    return -(-pages // cfg.num_planes)


# =========================
# Layout
# =========================

@dataclass(frozen=True)
class MatrixShape:
    layer: int
    name: str
    columns: int        # output elements
    rows: int           # weights per column (input width)

    @property
    def weights(self) -> int:
        return self.columns * self.rows


def nand_matrices(model: ModelSpec) -> List[MatrixShape]:
    """Every matrix the NAND side holds, in deployment order."""
    h = model.d_model
    out: List[MatrixShape] = []
    for layer in range(model.num_layers):
        out += [
            MatrixShape(layer, "q_proj", model.q_dim, h),
            MatrixShape(layer, "k_proj", model.kv_dim, h),
            MatrixShape(layer, "v_proj", model.kv_dim, h),
            MatrixShape(layer, "o_proj", h, model.q_dim),
        ]
        if model.d_ffn:
            if model.ffn_kind == "gated":
                out.append(MatrixShape(layer, "gate_proj", model.d_ffn, h))
            out.append(MatrixShape(layer, "up_proj", model.d_ffn, h))
            out.append(MatrixShape(layer, "down_proj", h, model.d_ffn))
    out.append(MatrixShape(HEAD_LAYER, "embedding", model.vocab_size, h))
    if model.max_positions:
        out.append(MatrixShape(HEAD_LAYER, "positions", model.max_positions, h))
    if not model.tied_embeddings:
        out.append(MatrixShape(HEAD_LAYER, "lm_head", model.vocab_size, h))
    return out


@dataclass(frozen=True)
class LayoutEntry:
    layer: int
    matrix: str
    column_start: int
    column_stop: int
    cluster: int
    plane: int          # plane index inside the cluster
    first_page: int
    num_pages: int
    segments: int


@dataclass
class WeightLayout:
    nand: NandConfig
    code: CodeConfig
    segments_per_page: int
    payload_bytes_per_page: int
    entries: List[LayoutEntry] = field(default_factory=list)
    plane_pages: Dict[Tuple[int, int], int] = field(default_factory=dict)
    shapes: Dict[Tuple[int, str], MatrixShape] = field(default_factory=dict)
    by_matrix: Dict[Tuple[int, str], List[LayoutEntry]] = field(default_factory=dict)

    def add(self, entry: LayoutEntry) -> None:
        self.entries.append(entry)
        self.by_matrix.setdefault((entry.layer, entry.matrix), []).append(entry)

    def entries_for(self, layer: int, matrix: str) -> List[LayoutEntry]:
        return self.by_matrix.get((layer, matrix), [])

    def max_pages_per_plane(self, layer: int, matrix: str) -> int:
        per_plane: Dict[Tuple[int, int], int] = {}
        for e in self.entries_for(layer, matrix):
            key = (e.cluster, e.plane)
            per_plane[key] = per_plane.get(key, 0) + e.num_pages
        return max(per_plane.values(), default=0)

    @property
    def mapped_weights(self) -> int:
        return sum(s.weights for s in self.shapes.values())

    @property
    def pages_used(self) -> int:
        return sum(self.plane_pages.values())


def build_layout(
    model: ModelSpec,
    cfg: NandConfig,
    code: CodeConfig,
    matrices: Sequence[MatrixShape] | None = None,
) -> WeightLayout:
    """
    Column-major striping: each matrix's output columns are split into one
    contiguous range per cluster, then per plane. A range occupies
    contiguous pages on its plane; pages hold whole segment codewords.
    """
    if code.lane_width != cfg.lane_width:
        raise CapacityError(f"code lane width {code.lane_width} != nand lane width {cfg.lane_width}")
    spp = segments_per_page(cfg, code)
    if spp == 0:
        raise CapacityError(f"a {cfg.page_bytes} B page cannot hold one {code.segment_codeword_bytes} B segment")

    layout = WeightLayout(
        nand=cfg,
        code=code,
        segments_per_page=spp,
        payload_bytes_per_page=spp * code.segment_data_bytes,
    )
    matrices = list(matrices) if matrices is not None else nand_matrices(model)
    planes = [(c, p) for c in range(cfg.num_clusters) for p in range(cfg.planes_per_cluster)]
    layout.plane_pages = {key: 0 for key in planes}
    pages_cap = cfg.plane_capacity_bytes // cfg.page_bytes

    for shape in matrices:
        layout.shapes[(shape.layer, shape.name)] = shape
        if shape.weights == 0:
            continue
        where = "head" if shape.layer == HEAD_LAYER else f"layer {shape.layer}"
        if not planes:
            raise CapacityError(f"no NAND planes for {where} {shape.name}", shape.layer, shape.name)
        segs_per_col = -(-shape.rows // cfg.lane_width)
        n = len(planes)
        for i, (cluster, plane) in enumerate(planes):
            start = shape.columns * i // n
            stop = shape.columns * (i + 1) // n
            if stop <= start:
                continue
            segments = (stop - start) * segs_per_col
            pages = pages_for_segments(segments, spp)
            first = layout.plane_pages[(cluster, plane)]
            if first + pages > pages_cap:
                raise CapacityError(
                    f"NAND capacity exceeded at {where} {shape.name}: "
                    f"plane {cluster}.{plane} needs {first + pages} pages, holds {pages_cap}",
                    layer=shape.layer,
                    matrix=shape.name,
                )
            layout.add(
                LayoutEntry(shape.layer, shape.name, start, stop, cluster, plane, first, pages, segments)
            )
            layout.plane_pages[(cluster, plane)] = first + pages

    log.debug(
        f"Layout: {len(layout.entries)} ranges, {layout.pages_used} pages "
        f"({layout.pages_used * cfg.page_bytes / 2**30:.2f} GiB of {cfg.capacity_bytes / 2**30:.0f} GiB)"
    )
    return layout


# =========================
# NAND image (page buffers with segment-interleaved parity)
# =========================

class NandImage:
    """Page contents of a deployed layout; writes happen only here, outside simulated time."""

    def __init__(self, layout: WeightLayout, codec: SecDedCodec | None = None) -> None:
        self.layout = layout
        self.codec = codec or SecDedCodec(layout.code)
        self.pages: Dict[Tuple[int, int, int], np.ndarray] = {}

    def _slot(self, entry: LayoutEntry, seg: int) -> Tuple[Tuple[int, int, int], int]:
        spp = self.layout.segments_per_page
        cw = self.layout.code.segment_codeword_bytes
        page = entry.first_page + seg // spp
        return (entry.cluster, entry.plane, page), (seg % spp) * cw

    def _page(self, key: Tuple[int, int, int]) -> np.ndarray:
        if key not in self.pages:
            self.pages[key] = np.zeros(self.layout.nand.page_bytes, dtype=np.uint8)
        return self.pages[key]

    def store(self, layer: int, matrix: str, weights: np.ndarray) -> None:
        shape = self.layout.shapes[(layer, matrix)]
        weights = np.asarray(weights)
        if weights.shape != (shape.columns, shape.rows):
            raise ValueError(f"{matrix}: expected {(shape.columns, shape.rows)}, got {weights.shape}")
        d = self.layout.code.lane_width
        pad = (-shape.rows) % d
        padded = np.concatenate([weights, np.zeros((shape.columns, pad), dtype=weights.dtype)], axis=1)
        for entry in self.layout.entries_for(layer, matrix):
            block = padded[entry.column_start:entry.column_stop].reshape(-1, d)
            bits = to_bits(block).reshape(block.shape[0], -1)
            parity = self.codec.encode_batch(bits)
            for seg in range(block.shape[0]):
                key, offset = self._slot(entry, seg)
                cw = np.concatenate([np.packbits(bits[seg]), np.packbits(parity[seg])])
                self._page(key)[offset:offset + cw.size] = cw
        log.debug(f"Stored {matrix} (layer {layer}) into {len(self.layout.entries_for(layer, matrix))} ranges")

    def load(
        self,
        layer: int,
        matrix: str,
        dtype: np.dtype | type,
        fault: FaultModel | None = None,
        correct: bool = True,
    ) -> np.ndarray:
        """Read a matrix back; with `fault`, every segment read is corrupted then checked."""
        shape = self.layout.shapes[(layer, matrix)]
        code = self.layout.code
        d = code.lane_width
        data_bytes = code.segment_data_bytes
        cw_bytes = code.segment_codeword_bytes
        out = np.zeros((shape.columns, -(-shape.rows // d) * d), dtype=dtype)

        read_index = 0
        for entry in self.layout.entries_for(layer, matrix):
            rows = []
            for seg in range(entry.segments):
                key, offset = self._slot(entry, seg)
                raw = self.pages[key][offset:offset + cw_bytes]
                data = np.unpackbits(raw[:data_bytes])
                parity = np.unpackbits(raw[data_bytes:])[: code.segment_parity_bits]
                if fault is not None:
                    flipped = inject(np.concatenate([data, parity]), fault, read_index)
                    data, parity = flipped[: data.size], flipped[data.size:]
                read_index += 1
                if correct and self.codec.dirty_batch(data[None, :], parity[None, :])[0]:
                    fixed, _ = self.codec.correct_batch(data[None, :], parity[None, :])
                    data = fixed[0]
                rows.append(from_bits(data, dtype))
            cols = entry.column_stop - entry.column_start
            out[entry.column_start:entry.column_stop] = np.concatenate(rows).reshape(cols, -1)
        return out[:, : shape.rows]


# =========================
# Prefetch plan and page streaming
# =========================

@dataclass(frozen=True)
class PageRead:
    cluster: int
    plane: int
    page_index: int
    issue_deadline: int     # ps
    segments: int


@dataclass(frozen=True)
class PrefetchPlan:
    reads: Tuple[PageRead, ...] = ()

    def __post_init__(self) -> None:
        seen = set()
        last: Dict[Tuple[int, int], int] = {}
        for r in self.reads:
            key = (r.cluster, r.plane, r.page_index)
            if key in seen:
                raise ValueError(f"page {key} appears twice in the plan")
            seen.add(key)
            plane = (r.cluster, r.plane)
            if r.issue_deadline < last.get(plane, -1):
                raise ValueError(f"deadlines decrease on plane {plane}")
            last[plane] = r.issue_deadline

    @property
    def total_segments(self) -> int:
        return sum(r.segments for r in self.reads)

    def __len__(self) -> int:
        return len(self.reads)


def prefetch_plan(
    layout: WeightLayout,
    stages: Iterable[Tuple[int, str]],
    start_ps: int = 0,
) -> PrefetchPlan:
    """
    Earliest-deadline-first page order for a sequence of (layer, matrix)
    stages: the k-th page read on a plane is due at start + k x read latency.
    """
    latency = layout.nand.read_latency_ps
    spp = layout.segments_per_page
    next_slot: Dict[Tuple[int, int], int] = {}
    reads: List[PageRead] = []
    for layer, matrix in stages:
        for e in layout.entries_for(layer, matrix):
            plane = (e.cluster, e.plane)
            remaining = e.segments
            for k in range(e.num_pages):
                slot = next_slot.get(plane, 0)
                next_slot[plane] = slot + 1
                segs = min(spp, remaining)
                remaining -= segs
                reads.append(PageRead(e.cluster, e.plane, e.first_page + k, start_ps + slot * latency, segs))
    reads.sort(key=lambda r: (r.issue_deadline, r.cluster, r.plane, r.page_index))
    return PrefetchPlan(tuple(reads))


def uniform_plan(
    cfg: NandConfig,
    pages_per_plane: int,
    segments_per_page: int,
    clusters: int | None = None,
) -> PrefetchPlan:
    clusters = cfg.num_clusters if clusters is None else clusters
    reads = [
        PageRead(c, p, k, k * cfg.read_latency_ps, segments_per_page)
        for k in range(pages_per_plane)
        for c in range(clusters)
        for p in range(cfg.planes_per_cluster)
    ]
    return PrefetchPlan(tuple(reads))


@dataclass
class StreamResult:
    events: List[SimEvent]
    delivered_bytes: int
    stall_fraction: float
    warmup_ps: int
    finish_ps: int
    first_arrival_ps: int | None

    def delivery_rate(self) -> float:
        """Steady-state payload bytes/s: last page's bytes excluded, first arrival to last arrival."""
        arrivals = [e for e in self.events if e.kind == EventKind.SEGMENT_READY]
        if len(arrivals) < 2:
            return 0.0
        span = arrivals[-1].timestamp - arrivals[0].timestamp
        moved = self.delivered_bytes - arrivals[-1].payload["bytes"]
        return moved * PS_PER_S / span if span > 0 else 0.0


@dataclass
class _Plane:
    pending: Deque[PageRead] = field(default_factory=deque)
    current: PageRead | None = None
    held: Deque[Tuple[int, PageRead]] = field(default_factory=deque)


@dataclass
class _Cluster:
    planes: Dict[int, _Plane] = field(default_factory=dict)
    fifo: Deque[PageRead] = field(default_factory=deque)
    lane_busy: bool = False
    busy_ps: int = 0
    first_arrival: int | None = None
    finish: int = 0


def stream(
    plan: PrefetchPlan,
    cfg: NandConfig,
    code: CodeConfig,
    lane_segments_per_s: float | None = None,
    start_ps: int = 0,
) -> StreamResult:
    """
    Page-level event simulation. A plane reads its pages in plan order,
    each read starting no earlier than its deadline; the page buffer (plus
    a cache register when cache_read) holds finished pages until the
    cluster FIFO has room. The lane pops pages in arrival order and drains
    each at `lane_segments_per_s` (default one segment per NAND-CMOS cycle).
    """
    rate = float(lane_segments_per_s or cfg.clock_hz)
    latency = cfg.read_latency_ps
    buffers = 2 if cfg.cache_read else 1
    data_bytes = code.segment_data_bytes

    clusters: Dict[int, _Cluster] = {}
    for r in plan.reads:
        cl = clusters.setdefault(r.cluster, _Cluster())
        cl.planes.setdefault(r.plane, _Plane()).pending.append(r)

    q = EventQueue()
    q.now = start_ps

    def drain_ps(r: PageRead) -> int:
        return int(round(r.segments * PS_PER_S / rate))

    def try_issue(c: int, p: int, now: int) -> None:
        pl = clusters[c].planes[p]
        if pl.current is not None or not pl.pending or len(pl.held) + 1 > buffers:
            return
        r = pl.pending.popleft()
        pl.current = r
        q.push(max(now, start_ps + r.issue_deadline) + latency, EventKind.PAGE_READ_DONE,
               cluster=c, plane=p, page=r.page_index)

    def try_push(c: int, now: int) -> None:
        cl = clusters[c]
        while len(cl.fifo) < cfg.fifo_pages:
            ready = [(pl.held[0][0], p) for p, pl in cl.planes.items() if pl.held]
            if not ready:
                return
            _, p = min(ready)
            _, r = cl.planes[p].held.popleft()
            cl.fifo.append(r)
            try_issue(c, p, now)

    def try_lane(c: int, now: int) -> None:
        cl = clusters[c]
        if cl.lane_busy or not cl.fifo:
            return
        r = cl.fifo.popleft()
        cl.lane_busy = True
        if cl.first_arrival is None:
            cl.first_arrival = now
        dt = drain_ps(r)
        q.push(now, EventKind.SEGMENT_READY, cluster=c, plane=r.plane, page=r.page_index,
               segments=r.segments, bytes=r.segments * data_bytes)
        q.push(now + dt, EventKind.MAC_COMMIT, cluster=c, drain=dt)
        try_push(c, now)

    for c, cl in clusters.items():
        for p in cl.planes:
            try_issue(c, p, start_ps)

    events: List[SimEvent] = []
    delivered = 0
    for ev in q.drain():
        c = ev.payload["cluster"]
        cl = clusters[c]
        if ev.kind == EventKind.PAGE_READ_DONE:
            pl = cl.planes[ev.payload["plane"]]
            pl.held.append((ev.timestamp, pl.current))
            pl.current = None
            try_push(c, ev.timestamp)
            try_issue(c, ev.payload["plane"], ev.timestamp)
            try_lane(c, ev.timestamp)
        elif ev.kind == EventKind.SEGMENT_READY:
            delivered += ev.payload["bytes"]
        elif ev.kind == EventKind.MAC_COMMIT:
            cl.lane_busy = False
            cl.busy_ps += ev.payload["drain"]
            cl.finish = ev.timestamp
            try_lane(c, ev.timestamp)
        events.append(ev)

    span = sum(cl.finish - cl.first_arrival for cl in clusters.values() if cl.first_arrival is not None)
    busy = sum(cl.busy_ps for cl in clusters.values())
    firsts = [cl.first_arrival for cl in clusters.values() if cl.first_arrival is not None]
    first = min(firsts) if firsts else None
    return StreamResult(
        events=events,
        delivered_bytes=delivered,
        stall_fraction=max(0.0, 1.0 - busy / span) if span > 0 else 0.0,
        warmup_ps=(first - start_ps) if first is not None else 0,
        finish_ps=max((cl.finish for cl in clusters.values()), default=start_ps),
        first_arrival_ps=first,
    )


def stream_time(pages_per_plane: int, planes_per_cluster: int, read_latency_ps: int, drain_ps: int) -> int:
    """Closed-form finish time of one cluster streaming a uniform plan from t = 0."""
    if pages_per_plane <= 0:
        return 0
    n, pc, lat = pages_per_plane, planes_per_cluster, read_latency_ps
    return lat + max(n * pc * drain_ps, (n - 1) * lat + pc * drain_ps)
