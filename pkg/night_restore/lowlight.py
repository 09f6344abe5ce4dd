"""Exposure-calibrated darkening with a quadratic light-enhancement curve.

One curve step maps ``x`` to ``x + a * x * (1 - x)``. With ``a`` in [-1, 0]
it darkens, keeps [0, 1] closed and is monotone in ``x``, so ``n`` stacked
steps never need clamping. Each step uses its own per-pixel map of ``a``.

The maps are calibrated rather than learned: a base value is solved so that
a mid-gray image lands exactly on the exposure target ``e``, then a smooth
seeded field adds spatial variation around it.
"""
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import optimize

from .constants import CURVE_ITERATIONS, DEFAULT_VARIATION, EXPOSURE_ANCHOR, EXPOSURE_RANGE
from .errors import CalibrationError, ParameterError, ShapeMismatchError
from .imagecore import ImageBuffer, broadcast_pair
from .noise import zero_mean_field
from .params import AlphaValue, ExposureTarget, PositiveInt, Seed, VariationAmplitude
from .seeding import generator
from .strategies import ArrayRangeValidationStrategy

logger = logging.getLogger(__name__)

_ALPHA_RANGE = ArrayRangeValidationStrategy(-1.0, 0.0, "Adjustment map")
_UNIT_RANGE = ArrayRangeValidationStrategy(0.0, 1.0, "Curve input")


@dataclass(frozen=True, slots=True)
class ExposureConfig:
    """Darkening settings for one image.

    Attributes:
        e: Exposure target in (0, 0.5]; 0.5 leaves mid-gray untouched.
        n: Curve iterations.
        variation_amplitude: Spread of the per-pixel maps around the base value.
        seed: Root of the variation streams.
    """
    e: float
    n: int = CURVE_ITERATIONS
    variation_amplitude: float = DEFAULT_VARIATION
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "e", ExposureTarget.check(self.e))
        object.__setattr__(self, "n", PositiveInt.check(self.n))
        object.__setattr__(self, "variation_amplitude", VariationAmplitude.check(self.variation_amplitude))
        object.__setattr__(self, "seed", Seed.check(self.seed))


@dataclass(frozen=True, slots=True)
class AdjustmentMapStack:
    """Per-iteration single-channel maps, every value in [-1, 0]."""
    maps: Tuple[ImageBuffer, ...]

    def __post_init__(self):
        maps = tuple(self.maps)
        if not maps:
            raise ParameterError("adjustment stack needs at least one map")
        first = maps[0]
        for i, m in enumerate(maps):
            if m.channels != 1:
                raise ShapeMismatchError(f"adjustment map {i} must be single-channel, got {m.channels}")
            if (m.height, m.width) != (first.height, first.width):
                raise ShapeMismatchError(f"adjustment map {i} is {m.height}x{m.width}, "
                                         f"expected {first.height}x{first.width}")
            status = _ALPHA_RANGE.validate(m.data)
            if not status.ok:
                raise ParameterError(f"adjustment map {i}: {status.details}")
        object.__setattr__(self, "maps", maps)

    def __len__(self) -> int:
        return len(self.maps)

    @classmethod
    def constant(cls, alpha: float, n: int, height: int, width: int) -> "AdjustmentMapStack":
        """``n`` identical maps holding one curve parameter.

        Raises:
            ParameterError: ``alpha`` outside [-1, 0].
        """
        alpha = AlphaValue.check(alpha)
        return cls(tuple(ImageBuffer.constant(height, width, 1, alpha) for _ in range(n)))


def _require(strategy: ArrayRangeValidationStrategy, data: np.ndarray) -> None:
    status = strategy.validate(data)
    if not status.ok:
        raise ParameterError(status.details)


def curve_step(x: ImageBuffer, alpha: ImageBuffer) -> ImageBuffer:
    """One darkening step ``x + a * x * (1 - x)``; a single-channel ``a`` spans all channels.

    Raises:
        ParameterError: ``x`` outside [0, 1] or ``a`` outside [-1, 0].
    """
    if alpha.channels != 1:
        raise ShapeMismatchError(f"adjustment map must be single-channel, got {alpha.channels}")
    _require(_UNIT_RANGE, x.data)
    _require(_ALPHA_RANGE, alpha.data)
    v, a = broadcast_pair(x, alpha)
    return ImageBuffer(v + a * v * (1.0 - v))


def darken(x: ImageBuffer, stack: AdjustmentMapStack) -> ImageBuffer:
    """Apply every map of ``stack`` in order."""
    out = x
    for alpha in stack.maps:
        out = curve_step(out, alpha)
    return out


def exposure_curve(x: float, alpha: float, n: int = CURVE_ITERATIONS) -> float:
    """Scalar n-fold curve with a constant ``alpha``."""
    for _ in range(n):
        x = x + alpha * x * (1.0 - x)
    return x


def exposure_floor(n: int = CURVE_ITERATIONS) -> float:
    """Darkest reachable mean for mid-gray, i.e. the curve at ``alpha = -1``."""
    return exposure_curve(EXPOSURE_ANCHOR, -1.0, n)


def calibrate_alpha(e: float, n: int = CURVE_ITERATIONS) -> float:
    """Constant ``alpha`` in [-1, 0] that darkens mid-gray to exactly ``e``.

    Smaller ``e`` gives a more negative ``alpha``.

    Raises:
        ParameterError: ``e`` outside (0, 0.5].
        CalibrationError: ``e`` below the curve's floor for ``n`` iterations.
    """
    e = ExposureTarget.check(e)
    n = PositiveInt.check(n)
    floor = exposure_floor(n)
    if e < floor:
        raise CalibrationError(f"exposure {e} is below the reachable floor {floor!r} for n={n}")
    if e == EXPOSURE_ANCHOR:
        return 0.0
    if e == floor:
        return -1.0
    alpha = optimize.bisect(lambda a: exposure_curve(EXPOSURE_ANCHOR, a, n) - e, -1.0, 0.0, xtol=1e-15)
    logger.debug("calibrated e=%.6f -> alpha=%.12f", e, alpha)
    return float(alpha)


def build_adjustment_stack(config: ExposureConfig, height: int, width: int) -> AdjustmentMapStack:
    """Maps ``clip(alpha_base + amplitude * phi_i, -1, 0)`` with one seeded field per iteration."""
    base = calibrate_alpha(config.e, config.n)
    if config.variation_amplitude == 0.0:
        return AdjustmentMapStack.constant(base, config.n, height, width)
    maps = []
    for i in range(config.n):
        phi = zero_mean_field(generator(config.seed, "exposure", i), height, width)
        maps.append(ImageBuffer(np.clip(base + config.variation_amplitude * phi, -1.0, 0.0)))
    return AdjustmentMapStack(tuple(maps))


def sample_exposure(rng: np.random.Generator, low: float = EXPOSURE_RANGE[0],
                    high: float = EXPOSURE_RANGE[1]) -> float:
    """Uniform exposure target on ``[low, high]``."""
    low, high = ExposureTarget.check(low), ExposureTarget.check(high)
    if low > high:
        raise ParameterError(f"exposure range is empty: [{low}, {high}]")
    return float(rng.uniform(low, high))


def apply_exposure(x: ImageBuffer, config: ExposureConfig) -> ImageBuffer:
    """Darken ``x`` with the stack built from ``config``."""
    return darken(x, build_adjustment_stack(config, x.height, x.width))
