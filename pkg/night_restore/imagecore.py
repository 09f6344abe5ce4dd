"""Raster carrier, element-wise algebra and 8-bit PNG I/O.

Every image, mask, transmission map and residual in the package is an
:class:`ImageBuffer`: a read-only ``float64`` array of shape H x W x C with
C in {1, 3}. Values may leave [0, 1] transiently between operations; they are
clamped and quantized only when written to disk.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import ClassVar, List, Sequence, Tuple, Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from .constants import ILLUMINATION_FLOOR, LUMA_WEIGHTS
from .errors import (
    CorruptImageError,
    ImageNotFoundError,
    ImageWriteError,
    ParameterError,
    ShapeMismatchError,
    UnsupportedImageError,
)
from .strategies import (
    ArrayRangeValidationStrategy,
    CoerceToFloatArray,
    FiniteArrayValidationStrategy,
    FreezeArray,
    RasterShapeValidationStrategy,
)
from .value import PipeLineStrategy, run_pipeline

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

_SUPPORTED_MODES = {"L": 1, "RGB": 3}


@dataclass(frozen=True, slots=True, eq=False)
class ImageBuffer:
    """Immutable H x W x C raster of 64-bit reals.

    The constructor accepts anything ``numpy`` can turn into a 2-D or 3-D float
    array; a 2-D input becomes single-channel.

    Raises:
        ParameterError: Wrong rank, empty extent, channel count not in {1, 3},
            or a NaN/inf sample.
    """
    data: np.ndarray

    channel_options: ClassVar[Tuple[int, ...]] = (1, 3)

    @classmethod
    def _strategies(cls) -> List[PipeLineStrategy]:
        return [CoerceToFloatArray(),
                RasterShapeValidationStrategy(cls.channel_options),
                FiniteArrayValidationStrategy(),
                FreezeArray()]

    def __post_init__(self):
        result = run_pipeline(self._strategies(), self.data)
        if not result.ok:
            raise ParameterError(f"{type(self).__name__}: {result.details}")
        object.__setattr__(self, "data", result.value)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.data.shape

    def __eq__(self, other):
        if not isinstance(other, ImageBuffer):
            return NotImplemented
        return type(self) is type(other) and np.array_equal(self.data, other.data)

    __hash__ = None

    def __repr__(self):
        h, w, c = self.shape
        return f"{type(self).__name__}({h}x{w}x{c}, range=[{self.data.min():.4g}, {self.data.max():.4g}])"

    @classmethod
    def constant(cls, height: int, width: int, channels: int, value: float) -> "ImageBuffer":
        return cls(np.full((height, width, channels), float(value)))

    def clamp01(self) -> "ImageBuffer":
        return ImageBuffer(np.clip(self.data, 0.0, 1.0))

    def crop(self, row: int, col: int, height: int, width: int) -> "ImageBuffer":
        """Sub-window with top-left ``(row, col)``; keeps the buffer's class."""
        return type(self)(self.data[row:row + height, col:col + width, :])

    def luma(self) -> np.ndarray:
        """2-D grayscale view (fixed luma weights for RGB)."""
        if self.channels == 1:
            return self.data[:, :, 0]
        return self.data @ np.asarray(LUMA_WEIGHTS)


class IlluminationMap(ImageBuffer):
    """Single-channel buffer with values in [floor, 1]; a safe Retinex divisor."""
    __slots__ = ()

    channel_options = (1,)

    @classmethod
    def _strategies(cls) -> List[PipeLineStrategy]:
        base = super()._strategies()
        # range check before the array is frozen
        return base[:-1] + [ArrayRangeValidationStrategy(ILLUMINATION_FLOOR, 1.0, "Illumination"), base[-1]]


def require_same_size(a: ImageBuffer, b: ImageBuffer, what: str = "operands") -> None:
    if a.height != b.height or a.width != b.width:
        raise ShapeMismatchError(f"{what} differ in size: {a.height}x{a.width} vs {b.height}x{b.width}")


def broadcast_pair(a: ImageBuffer, b: ImageBuffer) -> Tuple[np.ndarray, np.ndarray]:
    """Arrays of ``a`` and ``b`` ready for element-wise use.

    Only one implicit coercion exists: a single-channel operand spans every
    channel of the other.
    """
    require_same_size(a, b)
    if a.channels != b.channels and 1 not in (a.channels, b.channels):
        raise ShapeMismatchError(f"channel counts {a.channels} and {b.channels} cannot be combined")
    return a.data, b.data


def hadamard(a: ImageBuffer, b: ImageBuffer) -> ImageBuffer:
    """Element-wise product; a single-channel operand multiplies every channel."""
    x, y = broadcast_pair(a, b)
    return ImageBuffer(x * y)


def quantize(buf: ImageBuffer) -> np.ndarray:
    """8-bit samples as written by :func:`save_image`."""
    # round half up
    return np.floor(np.clip(buf.data, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def load_image(path: PathLike) -> ImageBuffer:
    """Read an 8-bit grayscale or RGB PNG; sample ``v`` becomes ``v / 255``.

    Raises:
        ImageNotFoundError: ``path`` is not a file.
        UnsupportedImageError: Not a PNG, or 16-bit, palette, alpha or interlaced.
        CorruptImageError: The stream cannot be decoded.
    """
    path = Path(path)
    if not path.is_file():
        raise ImageNotFoundError(f"no such image: {path}")
    try:
        with Image.open(path) as im:
            if im.format != "PNG":
                raise UnsupportedImageError(f"{path}: expected PNG, found {im.format}")
            if im.mode not in _SUPPORTED_MODES:
                raise UnsupportedImageError(f"{path}: unsupported PNG mode {im.mode!r} (8-bit L or RGB only)")
            if im.info.get("interlace"):
                raise UnsupportedImageError(f"{path}: interlaced PNG is not supported")
            if "transparency" in im.info:
                raise UnsupportedImageError(f"{path}: PNG transparency is not supported")
            im.load()
            raw = np.asarray(im, dtype=np.uint8)
    except UnidentifiedImageError as e:
        raise CorruptImageError(f"{path}: not a decodable image ({e})") from e
    except (OSError, SyntaxError, ValueError) as e:
        if isinstance(e, (UnsupportedImageError, ImageNotFoundError)):
            raise
        raise CorruptImageError(f"{path}: corrupt PNG stream ({e})") from e
    logger.debug("loaded %s mode=%s size=%s", path, "L" if raw.ndim == 2 else "RGB", raw.shape[:2])
    return ImageBuffer(raw.astype(np.float64) / 255.0)


def save_image(buf: ImageBuffer, path: PathLike) -> None:
    """Clamp to [0, 1], quantize with round-half-up and write an 8-bit PNG.

    Raises:
        ImageWriteError: The file cannot be written.
    """
    path = Path(path)
    raw = quantize(buf)
    if buf.channels == 1:
        raw = raw[:, :, 0]
    try:
        Image.fromarray(raw).save(path, format="PNG")
    except OSError as e:
        raise ImageWriteError(f"cannot write {path}: {e}") from e
    logger.debug("saved %s (%dx%dx%d)", path, buf.height, buf.width, buf.channels)

