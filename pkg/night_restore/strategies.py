"""Validation and transformation strategies for parameters and rasters.

Scalar strategies guard configuration values (exposure targets, extinction
coefficients, window sizes); array strategies guard the ``numpy`` payloads of
image buffers, masks and adjustment maps.
"""
from numbers import Integral, Real
from typing import Any, Sequence, Tuple

import numpy as np

from .response import StatusResponse, Response
from .status import Status
from .value import ValidationStrategy, TransformationStrategy
from .constants import DEFAULT_SUCCESS_MESSAGE

_OK = StatusResponse(status=Status.OK, details=DEFAULT_SUCCESS_MESSAGE)


def _fail(details: str) -> StatusResponse:
    return StatusResponse(status=Status.EXCEPTION, details=details)


def _is_real(value: Any) -> bool:
    return isinstance(value, (Real, np.floating, np.integer)) and not isinstance(value, (bool, np.bool_))


def _is_integral(value: Any) -> bool:
    return isinstance(value, (Integral, np.integer)) and not isinstance(value, (bool, np.bool_))


class RealNumberValidationStrategy(ValidationStrategy[Any]):
    """Accepts Python and numpy reals; rejects ``bool`` and everything else."""

    def validate(self, value: Any) -> StatusResponse:
        if not _is_real(value):
            return _fail(f"Value must be a real number, got '{type(value).__name__}'")
        return _OK


class IntegerValidationStrategy(ValidationStrategy[Any]):
    """Accepts Python and numpy integers; rejects ``bool`` and floats (even 3.0)."""

    def validate(self, value: Any) -> StatusResponse:
        if not _is_integral(value):
            return _fail(f"Value must be an integer, got '{type(value).__name__}'")
        return _OK


class CoerceToFloat(TransformationStrategy[Any, float]):
    """Converts an accepted real to a builtin ``float``."""

    def transform(self, value: Any) -> Response[float]:
        try:
            return Response(status=Status.OK, details=DEFAULT_SUCCESS_MESSAGE, value=float(value))
        except (TypeError, ValueError) as e:
            return Response(status=Status.EXCEPTION, details=str(e), value=None)


class CoerceToInt(TransformationStrategy[Any, int]):
    """Converts an accepted integer (including numpy integers) to a builtin ``int``."""

    def transform(self, value: Any) -> Response[int]:
        return Response(status=Status.OK, details=DEFAULT_SUCCESS_MESSAGE, value=int(value))


class FiniteValidationStrategy(ValidationStrategy[float]):
    """Rejects NaN and infinities."""

    def validate(self, value: float) -> StatusResponse:
        if not np.isfinite(value):
            return _fail(f"Value must be finite, got {value}")
        return _OK


class RangeValidationStrategy(ValidationStrategy[Any]):
    """Ensures low_value <= value <= high_value (both inclusive)."""

    def __init__(self, low_value: Any, high_value: Any):
        self.low_value = low_value
        self.high_value = high_value

    def validate(self, value: Any) -> StatusResponse:
        if value < self.low_value:
            return _fail(f"Value must be greater than or equal to {self.low_value}, got {value}")
        if value > self.high_value:
            return _fail(f"Value must be less than or equal to {self.high_value}, got {value}")
        return _OK


class GreaterThanValidationStrategy(ValidationStrategy[Any]):
    """Ensures value > bound (exclusive)."""

    def __init__(self, bound: Any):
        self.bound = bound

    def validate(self, value: Any) -> StatusResponse:
        if not value > self.bound:
            return _fail(f"Value must be greater than {self.bound}, got {value}")
        return _OK


class OddValidationStrategy(ValidationStrategy[int]):
    """Ensures an integer is odd (filter windows need a centre pixel)."""

    def validate(self, value: int) -> StatusResponse:
        if value % 2 == 0:
            return _fail(f"Value must be odd, got {value}")
        return _OK


class EnumValidationStrategy(ValidationStrategy[Any]):
    """Ensures a value is one of a provided collection."""

    def __init__(self, valid_values: Sequence[Any]):
        self.valid_values = tuple(valid_values)

    def validate(self, value: Any) -> StatusResponse:
        if value not in self.valid_values:
            return _fail(f"Value must be one of {list(self.valid_values)}, got {value!r}")
        return _OK


class FailValidationStrategy(ValidationStrategy[Any]):
    """Always fails with a fixed message; used to surface configuration errors."""
    __slots__ = ("_details",)

    def __init__(self, details: str):
        self._details = details

    def validate(self, value: Any) -> StatusResponse:
        return _fail(self._details)


# ---------------------------------------------------------------- arrays

class CoerceToFloatArray(TransformationStrategy[Any, np.ndarray]):
    """Copies the input into a fresh C-ordered ``float64`` array.

    A 2-D input gains a trailing channel axis so every raster is H x W x C.
    """

    def transform(self, value: Any) -> Response[np.ndarray]:
        try:
            arr = np.array(value, dtype=np.float64, order="C", copy=True)
        except (TypeError, ValueError) as e:
            return Response(status=Status.EXCEPTION, details=f"Cannot read raster data: {e}", value=None)
        if arr.ndim == 2:
            arr = arr[:, :, np.newaxis]
        return Response(status=Status.OK, details=DEFAULT_SUCCESS_MESSAGE, value=arr)


class RasterShapeValidationStrategy(ValidationStrategy[np.ndarray]):
    """Ensures an H x W x C array with positive extent and an allowed channel count."""

    def __init__(self, channels: Sequence[int] = (1, 3)):
        self.channels: Tuple[int, ...] = tuple(channels)

    def validate(self, value: np.ndarray) -> StatusResponse:
        if value.ndim != 3:
            return _fail(f"Raster must be H x W x C, got {value.ndim} dimension(s)")
        h, w, c = value.shape
        if h < 1 or w < 1:
            return _fail(f"Raster must have positive height and width, got {h}x{w}")
        if c not in self.channels:
            return _fail(f"Raster channels must be one of {list(self.channels)}, got {c}")
        return _OK


class FiniteArrayValidationStrategy(ValidationStrategy[np.ndarray]):
    """Rejects any NaN or infinite element."""

    def validate(self, value: np.ndarray) -> StatusResponse:
        if not np.all(np.isfinite(value)):
            bad = int(np.count_nonzero(~np.isfinite(value)))
            return _fail(f"Raster must be finite, found {bad} non-finite sample(s)")
        return _OK


class ArrayRangeValidationStrategy(ValidationStrategy[np.ndarray]):
    """Ensures low <= every element <= high."""

    def __init__(self, low: float, high: float, name: str = "Raster"):
        self.low = low
        self.high = high
        self.name = name

    def validate(self, value: np.ndarray) -> StatusResponse:
        if value.size == 0:
            return _OK
        lo, hi = float(value.min()), float(value.max())
        if lo < self.low or hi > self.high:
            return _fail(f"{self.name} values must lie in [{self.low}, {self.high}], got [{lo}, {hi}]")
        return _OK


class FreezeArray(TransformationStrategy[np.ndarray, np.ndarray]):
    """Marks the array read-only so the carrier stays an immutable value."""

    def transform(self, value: np.ndarray) -> Response[np.ndarray]:
        value.setflags(write=False)
        return Response(status=Status.OK, details=DEFAULT_SUCCESS_MESSAGE, value=value)
