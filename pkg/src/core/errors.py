# src/core/errors.py
from __future__ import annotations


class FlashEngineError(Exception):
    """Base for every error the CLI maps to a non-zero exit code."""

    exit_code = 1


class ConfigError(FlashEngineError, ValueError):
    exit_code = 2

    def __init__(self, path: str, message: str) -> None:
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class CapacityError(FlashEngineError, RuntimeError):
    exit_code = 3

    def __init__(self, message: str, layer: int | None = None, matrix: str | None = None) -> None:
        self.layer = layer
        self.matrix = matrix
        super().__init__(message)


class UncorrectableSegmentError(FlashEngineError, RuntimeError):
    exit_code = 4

    def __init__(
        self,
        segment_index: int,
        layer: int | None = None,
        matrix: str | None = None,
    ) -> None:
        self.segment_index = segment_index
        self.layer = layer
        self.matrix = matrix
        where = f"segment {segment_index}"
        if layer is not None:
            where += f" (layer {layer}, {matrix})"
        super().__init__(f"Uncorrectable read at {where}")


class ScoreboardError(FlashEngineError, RuntimeError):
    """Deferred-commit pass found an entry without corrected data."""
