# src/ecc/faults.py
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass

import numpy as np

from src.core.errors import ConfigError

U64 = (1 << 64) - 1


def label_id(label: str) -> int:
    """Stable 32-bit id for a stream label (Python's hash() is salted per process)."""
    return zlib.crc32(label.encode("utf-8"))


def counter_rng(seed: int, label: str, index: int) -> np.random.Generator:
    """
    Counter-based stream: Philox keyed by (seed, label), counter starting at
    `index` in the high word so consecutive indices never overlap.
    """
    if index < 0:
        raise ValueError(f"read index must be >= 0 (got {index})")
    key = np.array([seed & U64, label_id(label)], dtype=np.uint64)
    counter = np.array([0, 0, 0, index & U64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


@dataclass(frozen=True)
class FaultModel:
    rber: float = 0.0
    seed: int = 0
    label: str = "nand-read"

    def __post_init__(self) -> None:
        if not (0.0 <= float(self.rber) <= 1.0) or math.isnan(float(self.rber)):
            raise ConfigError("fault.rber", f"must be in [0, 1] (got {self.rber})")
        if not (0 <= int(self.seed) <= U64):
            raise ConfigError("fault.seed", "must be an unsigned 64-bit integer")

    def generator(self, read_index: int) -> np.random.Generator:
        return counter_rng(self.seed, self.label, read_index)

    def derive(self, label: str) -> "FaultModel":
        return FaultModel(rber=self.rber, seed=self.seed, label=label)


def inject(bits: np.ndarray, model: FaultModel, read_index: int) -> np.ndarray:
    """Flip each bit independently with probability model.rber."""
    bits = np.asarray(bits, dtype=np.uint8)
    if model.rber == 0.0 or bits.size == 0:
        return bits.copy()
    rng = model.generator(read_index)
    flips = rng.random(bits.size) < model.rber
    return bits ^ flips.reshape(bits.shape).astype(np.uint8)


def dirty_probability(codeword_bits: int, rber: float) -> float:
    """P[at least one flip among codeword_bits]."""
    if rber <= 0.0:
        return 0.0
    if rber >= 1.0:
        return 1.0
    return -math.expm1(codeword_bits * math.log1p(-rber))


def multi_flip_probability(subword_bits: int, rber: float) -> float:
    """P[two or more flips in one subword]: detected but not correctable by SEC-DED."""
    if rber <= 0.0:
        return 0.0
    if rber >= 1.0:
        return 1.0 if subword_bits >= 2 else 0.0
    none = (1.0 - rber) ** subword_bits
    one = subword_bits * rber * (1.0 - rber) ** (subword_bits - 1)
    return max(0.0, 1.0 - none - one)


@dataclass(frozen=True)
class ReadFaults:
    dirty_segments: int
    uncorrectable_segments: int
    first_uncorrectable: int | None


def sample_read_faults(
    model: FaultModel,
    read_index: int,
    segments: int,
    codeword_bits: int,
    subword_bits: int,
    subwords_per_segment: int,
) -> ReadFaults:
    """
    Aggregate fault draw for a long stream of segments: the number of Dirty
    segments and how many of those hold an uncorrectable subword.
    Statistically equivalent to inject() + check over every segment.
    """
    if model.rber == 0.0 or segments <= 0:
        return ReadFaults(0, 0, None)

    p_dirty = dirty_probability(codeword_bits, model.rber)
    p_multi = multi_flip_probability(subword_bits, model.rber)
    p_bad = 1.0 - (1.0 - p_multi) ** subwords_per_segment
    p_bad = min(p_bad, p_dirty)

    rng = model.generator(read_index)
    bad = int(rng.binomial(segments, p_bad)) if p_bad > 0 else 0
    rest = segments - bad
    p_dirty_ok = (p_dirty - p_bad) / (1.0 - p_bad) if p_bad < 1.0 else 0.0
    dirty_ok = int(rng.binomial(rest, min(max(p_dirty_ok, 0.0), 1.0))) if rest > 0 else 0
    first = int(rng.integers(segments)) if bad else None
    return ReadFaults(bad + dirty_ok, bad, first)

