# src/engine/events.py
from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Any, Dict, Iterator, List, Tuple


class EventKind(IntEnum):
    """Value is the tie-break priority for events at the same timestamp."""
    PAGE_READ_DONE = 0
    SEGMENT_READY = 1
    CHECK_DONE = 2
    CORRECTION_DONE = 3
    MAC_COMMIT = 4
    NPU_CHUNK_DONE = 5
    DRAM_BURST_DONE = 6
    IO_TRANSFER_DONE = 7
    TOKEN_DONE = 8
    SCHEDULER_DECISION = 9

    @property
    def label(self) -> str:
        return "".join(part.capitalize() for part in self.name.split("_"))


@dataclass(frozen=True)
class SimEvent:
    timestamp: int                 # ps on the global logical clock
    kind: EventKind
    payload: Dict[str, Any] = field(default_factory=dict)
    seq: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {"timestamp": self.timestamp, "kind": self.kind.label, "seq": self.seq, **self.payload}


class EventQueue:
    """Min-heap ordered by (timestamp, kind priority, insertion sequence)."""

    def __init__(self) -> None:
        self._heap: List[Tuple[int, int, int, SimEvent]] = []
        self._seq = 0
        self.now = 0

    def push(self, timestamp: int, kind: EventKind, **payload: Any) -> SimEvent:
        if timestamp < self.now:
            raise ValueError(f"event at {timestamp} ps is in the past (now {self.now} ps)")
        ev = SimEvent(int(timestamp), kind, payload, self._seq)
        heapq.heappush(self._heap, (ev.timestamp, int(kind), self._seq, ev))
        self._seq += 1
        return ev

    def pop(self) -> SimEvent:
        _, _, _, ev = heapq.heappop(self._heap)
        self.now = ev.timestamp
        return ev

    def peek(self) -> SimEvent | None:
        return self._heap[0][3] if self._heap else None

    def drain(self) -> Iterator[SimEvent]:
        while self._heap:
            yield self.pop()

    def __len__(self) -> int:
        return len(self._heap)

    def __bool__(self) -> bool:
        return bool(self._heap)
