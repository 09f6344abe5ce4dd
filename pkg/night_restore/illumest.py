"""Illumination estimation for Retinex-style decomposition ``y = z * x``.

The estimate starts from the per-pixel channel maximum of the low-light input
and is pulled toward a blurred envelope of itself over a few stages. Each
stage adds a non-negative residual, so the map only ever grows.
"""
import logging

import numpy as np
from scipy import ndimage

from .constants import BLUR_WINDOW, ILLUMINATION_FLOOR, REFINE_RATE, REFINE_STAGES
from .errors import ShapeMismatchError
from .imagecore import IlluminationMap, ImageBuffer, require_same_size
from .params import OddWindow, PositiveInt, RefineRate

logger = logging.getLogger(__name__)


def init_illumination(y: ImageBuffer) -> IlluminationMap:
    """Channel maximum of ``y``, floored and capped to [floor, 1]."""
    return IlluminationMap(np.clip(y.data.max(axis=2), ILLUMINATION_FLOOR, 1.0))


def refine_step(x_t: IlluminationMap, envelope: IlluminationMap, kappa: float) -> IlluminationMap:
    """``x + kappa * max(0, envelope - x)``."""
    kappa = RefineRate.check(kappa)
    require_same_size(x_t, envelope, "illumination maps")
    target = np.maximum(x_t.data, envelope.data)
    if kappa == 1.0:
        return IlluminationMap(target)
    residual = np.maximum(0.0, envelope.data - x_t.data)
    # never past the target, rounding included
    return IlluminationMap(np.minimum(x_t.data + kappa * residual, target))


def envelope_of(x0: IlluminationMap, blur_window: int = BLUR_WINDOW) -> IlluminationMap:
    """Box-blurred local brightness with edge replication."""
    blur_window = OddWindow.check(blur_window)
    smooth = ndimage.uniform_filter(x0.data[:, :, 0], size=blur_window, mode="nearest")
    return IlluminationMap(np.clip(smooth, ILLUMINATION_FLOOR, 1.0))


def estimate_illumination(y: ImageBuffer, stages: int = REFINE_STAGES, kappa: float = REFINE_RATE,
                          blur_window: int = BLUR_WINDOW) -> IlluminationMap:
    """Cascade ``stages`` refinement steps from the channel-max initial map.

    Raises:
        ParameterError: Non-positive ``stages``, ``kappa`` outside (0, 1] or an
            even ``blur_window``.
    """
    stages = PositiveInt.check(stages)
    kappa = RefineRate.check(kappa)
    x = init_illumination(y)
    envelope = envelope_of(x, blur_window)
    for _ in range(stages):
        x = refine_step(x, envelope, kappa)
    logger.debug("illumination estimated: %d stages, mean %.4f", stages, float(x.data.mean()))
    return x


def retinex_divide(y: ImageBuffer, x: IlluminationMap) -> ImageBuffer:
    """Reflectance ``clip(y / x, 0, 1)``, dividing every channel by the same map."""
    if not isinstance(x, IlluminationMap):
        raise ShapeMismatchError("divisor must be an IlluminationMap")
    require_same_size(y, x, "image and illumination")
    return ImageBuffer(np.clip(y.data / x.data, 0.0, 1.0))
