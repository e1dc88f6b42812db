# src/ecc/codec.py
"""
Block code used by the error-resilient dot product.

Default code is an extended Hamming SEC-DED per 64-bit subword, (72, 64):
Hamming check bits sit at power-of-two positions 1..2^(m-1) of a 1-based
position space, data bits fill the remaining positions, and one overall
parity bit covers the whole subword. A segment of d weights is split into
subwords that are checked and corrected independently.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Protocol, Tuple

import numpy as np

from src.core.errors import ConfigError


class CheckStatus(str, Enum):
    CLEAN = "Clean"
    DIRTY = "Dirty"


class CorrectionOutcome(str, Enum):
    CORRECTED = "Corrected"
    DETECTED_UNCORRECTABLE = "DetectedUncorrectable"


def hamming_check_bits(k: int) -> int:
    m = 1
    while 2**m < m + k + 1:
        m += 1
    return m


@dataclass(frozen=True)
class CodeConfig:
    data_bits_per_subword: int = 64
    parity_bits_per_subword: int = 8
    lane_width: int = 32            # d, weights per segment
    weight_bits: int = 8
    correction_cycles: int = 8

    def __post_init__(self) -> None:
        if self.data_bits_per_subword <= 0:
            raise ConfigError("ecc.data_bits", "must be > 0")
        expected = hamming_check_bits(self.data_bits_per_subword) + 1
        if self.parity_bits_per_subword != expected:
            raise ConfigError(
                "ecc.parity_bits",
                f"SEC-DED over {self.data_bits_per_subword} data bits needs {expected} parity bits",
            )
        if self.lane_width <= 0:
            raise ConfigError("nand.lane_width", "must be > 0")
        if self.weight_bits not in (8, 16):
            raise ConfigError("model.weight_precision", "weights must be 8 or 16 bits")
        if self.segment_data_bits % self.data_bits_per_subword:
            raise ConfigError(
                "ecc.data_bits",
                f"segment of {self.segment_data_bits} bits is not a whole number of subwords",
            )
        if self.correction_cycles < 1:
            raise ConfigError("ecc.correction_cycles", "must be >= 1")

    @property
    def segment_data_bits(self) -> int:
        return self.lane_width * self.weight_bits

    @property
    def subwords_per_segment(self) -> int:
        return self.segment_data_bits // self.data_bits_per_subword

    @property
    def segment_parity_bits(self) -> int:
        return self.subwords_per_segment * self.parity_bits_per_subword

    @property
    def segment_parity_bytes(self) -> float:
        return self.segment_parity_bits / 8

    @property
    def segment_codeword_bits(self) -> int:
        return self.segment_data_bits + self.segment_parity_bits

    @property
    def segment_codeword_bytes(self) -> int:
        return -(-self.segment_codeword_bits // 8)

    @property
    def segment_data_bytes(self) -> int:
        return self.segment_data_bits // 8

    @property
    def subword_codeword_bits(self) -> int:
        return self.data_bits_per_subword + self.parity_bits_per_subword

    @property
    def code_rate(self) -> float:
        return self.data_bits_per_subword / self.subword_codeword_bits

    def for_precision(self, weight_bits: int) -> "CodeConfig":
        return CodeConfig(
            data_bits_per_subword=self.data_bits_per_subword,
            parity_bits_per_subword=self.parity_bits_per_subword,
            lane_width=self.lane_width,
            weight_bits=weight_bits,
            correction_cycles=self.correction_cycles,
        )


@dataclass
class Codeword:
    data: np.ndarray      # uint8 bits, segment_data_bits long
    parity: np.ndarray    # uint8 bits, segment_parity_bits long


class Codec(Protocol):
    cfg: CodeConfig

    def encode(self, segment: np.ndarray) -> np.ndarray:
        ...

    def check(self, codeword: Codeword) -> CheckStatus:
        ...

    def correct(self, codeword: Codeword) -> Tuple[np.ndarray, CorrectionOutcome]:
        ...

    def encode_batch(self, data: np.ndarray) -> np.ndarray:
        ...

    def dirty_batch(self, data: np.ndarray, parity: np.ndarray) -> np.ndarray:
        ...


# ---------------------------------------------------------------------------
# Bit helpers
# ---------------------------------------------------------------------------

def to_bits(values: np.ndarray) -> np.ndarray:
    """Weights (int8 or uint16 BF16 patterns) → flat uint8 bit vector, MSB first per byte."""
    arr = np.ascontiguousarray(values)
    if arr.dtype.itemsize == 2:
        arr = arr.astype("<u2")
    return np.unpackbits(arr.view(np.uint8))


def from_bits(bits: np.ndarray, dtype: np.dtype | type) -> np.ndarray:
    dtype = np.dtype(dtype)
    raw = np.packbits(bits.astype(np.uint8))
    if dtype.itemsize == 2:
        return raw.view("<u2").astype(dtype)
    return raw.view(dtype)


# ---------------------------------------------------------------------------
# SEC-DED
# ---------------------------------------------------------------------------

class SecDedCodec:
    """
    Extended Hamming SEC-DED per subword. Vectorized over subwords with
    numpy; syndromes are H·v over GF(2).

    correction_enabled=False turns correct() into a pass-through that still
    reports Corrected; used to prove the validation suite catches a broken
    corrector.
    """

    def __init__(self, cfg: CodeConfig | None = None, *, correction_enabled: bool = True) -> None:
        self.cfg = cfg or CodeConfig()
        self.correction_enabled = correction_enabled

        k = self.cfg.data_bits_per_subword
        m = hamming_check_bits(k)
        self._k = k
        self._m = m
        self._n = m + k                          # positions 1..n, excluding overall parity

        check_positions = {1 << i for i in range(m)}
        data_positions = [p for p in range(1, self._n + 1) if p not in check_positions]
        self._data_positions = np.array(data_positions, dtype=np.int64)

        # G[i, j] = 1 when data bit j is covered by check bit i
        self._g = ((self._data_positions[None, :] >> np.arange(m)[:, None]) & 1).astype(np.int64)
        self._weights = (1 << np.arange(m)).astype(np.int64)

        self._pos_to_data = np.full(1 << m, -1, dtype=np.int64)
        self._pos_to_data[self._data_positions] = np.arange(k)

    # -- single codeword API ------------------------------------------------

    def encode(self, segment: np.ndarray) -> np.ndarray:
        segment = np.asarray(segment, dtype=np.uint8)
        if segment.size != self.cfg.segment_data_bits:
            raise ValueError(
                f"segment has {segment.size} bits, expected {self.cfg.segment_data_bits}"
            )
        return self.encode_batch(segment.reshape(1, -1)).reshape(-1)

    def check(self, codeword: Codeword) -> CheckStatus:
        dirty = self.dirty_batch(
            np.asarray(codeword.data, dtype=np.uint8).reshape(1, -1),
            np.asarray(codeword.parity, dtype=np.uint8).reshape(1, -1),
        )
        return CheckStatus.DIRTY if bool(dirty[0]) else CheckStatus.CLEAN

    def correct(self, codeword: Codeword) -> Tuple[np.ndarray, CorrectionOutcome]:
        data = np.asarray(codeword.data, dtype=np.uint8).reshape(1, -1)
        parity = np.asarray(codeword.parity, dtype=np.uint8).reshape(1, -1)
        fixed, bad = self.correct_batch(data, parity)
        outcome = (
            CorrectionOutcome.DETECTED_UNCORRECTABLE if bool(bad[0]) else CorrectionOutcome.CORRECTED
        )
        return fixed.reshape(-1), outcome

    # -- batch API (rows are segments) -------------------------------------

    def _subwords(self, data: np.ndarray, parity: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        k, p = self._k, self.cfg.parity_bits_per_subword
        return (
            data.reshape(-1, k).astype(np.int64),
            parity.reshape(-1, p).astype(np.int64),
        )

    def encode_batch(self, data: np.ndarray) -> np.ndarray:
        data = np.asarray(data, dtype=np.uint8)
        segments = data.shape[0]
        sub = data.reshape(-1, self._k).astype(np.int64)
        ham = (sub @ self._g.T) % 2
        overall = (sub.sum(axis=1) + ham.sum(axis=1)) % 2
        parity = np.concatenate([ham, overall[:, None]], axis=1).astype(np.uint8)
        return parity.reshape(segments, -1)

    def _syndromes(self, data: np.ndarray, parity: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        sub, par = self._subwords(data, parity)
        m = self._m
        bits = ((sub @ self._g.T) + par[:, :m]) % 2
        s_ham = bits @ self._weights
        s_all = (sub.sum(axis=1) + par.sum(axis=1)) % 2
        return s_ham, s_all

    def dirty_batch(self, data: np.ndarray, parity: np.ndarray) -> np.ndarray:
        """Per-segment Dirty flag: any subword with a non-zero syndrome."""
        data = np.asarray(data, dtype=np.uint8)
        segments = data.shape[0]
        s_ham, s_all = self._syndromes(data, np.asarray(parity, dtype=np.uint8))
        dirty_sub = (s_ham != 0) | (s_all != 0)
        return dirty_sub.reshape(segments, -1).any(axis=1)

    def correct_batch(self, data: np.ndarray, parity: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Returns (corrected data rows, per-segment uncorrectable flag).
        Uncorrectable subwords are returned as read.
        """
        data = np.asarray(data, dtype=np.uint8)
        segments = data.shape[0]
        if not self.correction_enabled:
            return data.copy(), np.zeros(segments, dtype=bool)

        s_ham, s_all = self._syndromes(data, np.asarray(parity, dtype=np.uint8))
        single = s_all == 1
        double = (s_all == 0) & (s_ham != 0)
        out_of_range = single & (s_ham > self._n)
        bad_sub = double | out_of_range

        fixed = data.reshape(-1, self._k).copy()
        target = np.where(single & ~out_of_range, self._pos_to_data[np.minimum(s_ham, self._n)], -1)
        rows = np.nonzero(target >= 0)[0]
        fixed[rows, target[rows]] ^= 1

        return fixed.reshape(segments, -1), bad_sub.reshape(segments, -1).any(axis=1)
