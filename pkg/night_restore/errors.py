"""Exception hierarchy.

Every error derives from :class:`NightRestoreError` and from the builtin it
specialises, so callers may catch either.
"""
from __future__ import annotations

from typing import Sequence


class NightRestoreError(Exception):
    """Root of all errors raised by this package."""


class ParameterError(NightRestoreError, ValueError):
    """A scalar or configuration parameter failed its constraints."""


class ShapeMismatchError(NightRestoreError, ValueError):
    """Operand rasters have incompatible dimensions."""


class ImageNotFoundError(NightRestoreError, FileNotFoundError):
    """The image file does not exist."""


class UnsupportedImageError(NightRestoreError, ValueError):
    """The file is a readable image but uses a format feature we refuse to convert."""


class CorruptImageError(NightRestoreError, ValueError):
    """The file could not be decoded as a PNG stream."""


class ImageWriteError(NightRestoreError, OSError):
    """The output path could not be written."""


class CalibrationError(NightRestoreError, ValueError):
    """No curve parameter in [-1, 0] reaches the requested exposure."""


class ArchitectureMismatchError(NightRestoreError, ValueError):
    """A parameter vector does not fit the architecture it claims."""


class ManifestError(NightRestoreError, ValueError):
    """A dataset manifest is malformed or references missing files."""


class TrainingDivergedError(NightRestoreError, RuntimeError):
    """Loss exceeded the divergence threshold; ``trace`` holds every loss so far."""

    def __init__(self, message: str, trace: Sequence[float]):
        super().__init__(message)
        self.trace = list(trace)


class UnmatchedFilesError(NightRestoreError, ValueError):
    """Prediction and ground-truth directories do not pair up by filename."""

    def __init__(self, missing_in_truth: Sequence[str], missing_in_prediction: Sequence[str]):
        self.missing_in_truth = sorted(missing_in_truth)
        self.missing_in_prediction = sorted(missing_in_prediction)
        parts = []
        if self.missing_in_truth:
            parts.append(f"no ground truth for: {', '.join(self.missing_in_truth)}")
        if self.missing_in_prediction:
            parts.append(f"no prediction for: {', '.join(self.missing_in_prediction)}")
        super().__init__("; ".join(parts) or "no files to compare")
