from .codec import (
    CheckStatus,
    Codec,
    CodeConfig,
    Codeword,
    CorrectionOutcome,
    SecDedCodec,
    from_bits,
    to_bits,
)
from .faults import FaultModel, inject, sample_read_faults

__all__ = [
    "CheckStatus",
    "Codec",
    "CodeConfig",
    "Codeword",
    "CorrectionOutcome",
    "SecDedCodec",
    "from_bits",
    "to_bits",
    "FaultModel",
    "inject",
    "sample_read_faults",
]
