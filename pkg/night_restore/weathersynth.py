"""Adverse-weather compositing and the seeded generators that feed it.

Four compositing models cover the five degradation kinds::

    raindrop   I = (1 - M) * C + R
    rain       I = T * (C + sum_i R_i) + (1 - T) * A
    snow       I = (1 - M) * C + M * S
    fog, haze  I = T * C + (1 - T) * A

Masks, residuals, streak layers and transmission maps are generated
procedurally from a seed (see :mod:`night_restore.seeding`), so every weather
effect can be rebuilt from its metadata record alone. Compositor outputs are
clamped to [0, 1], never renormalised.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage

from .constants import ATMOSPHERIC_LIGHT
from .errors import ParameterError, ShapeMismatchError
from .imagecore import ImageBuffer, broadcast_pair
from .noise import fbm
from .params import (
    EnumValue,
    FiniteReal,
    ParticleDensity,
    PositiveInt,
    PositiveReal,
    Seed,
    UnitInterval,
)
from .seeding import generator
from .strategies import ArrayRangeValidationStrategy

logger = logging.getLogger(__name__)

AtmosphericLight = Union[float, Tuple[float, ...]]

ANGLE_JITTER = 5.0
STREAK_PIXELS_PER_SEGMENT = 400.0


class DegradationKind(str, Enum):
    RAINDROP = "raindrop"
    RAIN = "rain"
    SNOW = "snow"
    FOG = "fog"
    HAZE = "haze"

    @classmethod
    def parse(cls, name: Union[str, "DegradationKind"]) -> "DegradationKind":
        """Look a kind up by its manifest name.

        Raises:
            ParameterError: ``name`` is not one of the five kinds.
        """
        checked = EnumValue(name, cls)
        if not checked.ok:
            raise ParameterError(f"degradation kind: {checked.details}")
        return cls(checked.value)


@dataclass(frozen=True, slots=True)
class StreakGeometry:
    """Rain streak shape: angle from vertical in degrees, length and width in pixels."""
    angle: float = 0.0
    length: float = 12.0
    width: float = 1.5

    def __post_init__(self):
        object.__setattr__(self, "angle", FiniteReal.check(self.angle))
        object.__setattr__(self, "length", PositiveReal.check(self.length))
        object.__setattr__(self, "width", PositiveReal.check(self.width))


def _check_radius_range(radius_range: Sequence[float]) -> Tuple[float, float]:
    if len(radius_range) != 2:
        raise ParameterError(f"radius range needs (low, high), got {tuple(radius_range)}")
    low, high = PositiveReal.check(radius_range[0]), PositiveReal.check(radius_range[1])
    if low > high:
        raise ParameterError(f"radius range is empty: ({low}, {high})")
    return low, high


def _check_light(light: Any) -> AtmosphericLight:
    if isinstance(light, (list, tuple, np.ndarray)):
        values = tuple(UnitInterval.check(v) for v in light)
        if len(values) not in (1, 3):
            raise ParameterError(f"atmospheric light needs 1 or 3 channels, got {len(values)}")
        return values
    return UnitInterval.check(light)


@dataclass(frozen=True, slots=True)
class WeatherParams:
    """Every knob of one weather effect; the seed determines every generated field.

    Attributes:
        seed: Root of the weather sub-streams.
        streak_count: Number of rain layers.
        geometry: Rain streak shape.
        intensity: Peak streak value, in [0, 1].
        density: Target covered fraction for particles, in (0, 1].
        radius_range: Particle radius bounds in pixels.
        atmospheric_light: Veil colour, scalar or per channel.
        beta: Extinction coefficient of the medium.
        haze_uniformity: 0 keeps the pseudo-depth field, 1 flattens it to its mean.
    """
    seed: int = 0
    streak_count: int = 3
    geometry: StreakGeometry = field(default_factory=StreakGeometry)
    intensity: float = 0.6
    density: float = 0.05
    radius_range: Tuple[float, float] = (1.5, 4.0)
    atmospheric_light: AtmosphericLight = ATMOSPHERIC_LIGHT
    beta: float = 1.0
    haze_uniformity: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "seed", Seed.check(self.seed))
        object.__setattr__(self, "streak_count", PositiveInt.check(self.streak_count))
        if not isinstance(self.geometry, StreakGeometry):
            raise ParameterError(f"geometry must be a StreakGeometry, got {type(self.geometry).__name__}")
        object.__setattr__(self, "intensity", UnitInterval.check(self.intensity))
        object.__setattr__(self, "density", ParticleDensity.check(self.density))
        object.__setattr__(self, "radius_range", _check_radius_range(self.radius_range))
        object.__setattr__(self, "atmospheric_light", _check_light(self.atmospheric_light))
        object.__setattr__(self, "beta", PositiveReal.check(self.beta))
        object.__setattr__(self, "haze_uniformity", UnitInterval.check(self.haze_uniformity))

    @classmethod
    def for_kind(cls, kind: Union[str, DegradationKind], seed: int = 0, **overrides) -> "WeatherParams":
        """Defaults tuned per kind: smooth fog, near-uniform haze, a thin veil behind rain."""
        kind = DegradationKind.parse(kind)
        defaults: Dict[str, Any] = {
            DegradationKind.FOG: dict(haze_uniformity=0.2, beta=1.0),
            DegradationKind.HAZE: dict(haze_uniformity=0.9, beta=1.0),
            DegradationKind.RAIN: dict(haze_uniformity=0.8, beta=0.3),
            DegradationKind.SNOW: dict(radius_range=(1.0, 3.0)),
            DegradationKind.RAINDROP: dict(radius_range=(3.0, 8.0)),
        }[kind]
        return cls(seed=seed, **{**defaults, **overrides})

    def to_record(self) -> Dict[str, Any]:
        """JSON-ready dict; :meth:`from_record` restores an equal instance."""
        light = self.atmospheric_light
        return {
            "seed": self.seed,
            "streak_count": self.streak_count,
            "angle": self.geometry.angle,
            "length": self.geometry.length,
            "width": self.geometry.width,
            "intensity": self.intensity,
            "density": self.density,
            "radius_range": list(self.radius_range),
            "atmospheric_light": list(light) if isinstance(light, tuple) else light,
            "beta": self.beta,
            "haze_uniformity": self.haze_uniformity,
        }

    @classmethod
    def from_record(cls, record: Dict[str, Any]) -> "WeatherParams":
        light = record["atmospheric_light"]
        return cls(
            seed=record["seed"],
            streak_count=record["streak_count"],
            geometry=StreakGeometry(record["angle"], record["length"], record["width"]),
            intensity=record["intensity"],
            density=record["density"],
            radius_range=tuple(record["radius_range"]),
            atmospheric_light=tuple(light) if isinstance(light, list) else light,
            beta=record["beta"],
            haze_uniformity=record["haze_uniformity"],
        )


def sample_weather_params(kind: Union[str, DegradationKind], rng: np.random.Generator,
                          seed: int) -> WeatherParams:
    """Draw the random parameters of one image.

    The same number of values is drawn for every kind so the stream stays aligned
    whatever the kind.
    """
    kind = DegradationKind.parse(kind)
    beta = rng.uniform(0.5, 2.0)
    light = rng.uniform(0.7, 0.9)
    angle = rng.uniform(-20.0, 20.0)
    intensity = rng.uniform(0.4, 0.9)
    density = rng.uniform(0.02, 0.08)
    overrides: Dict[str, Any] = dict(atmospheric_light=float(light))
    if kind in (DegradationKind.FOG, DegradationKind.HAZE):
        overrides["beta"] = float(beta)
    elif kind is DegradationKind.RAIN:
        overrides["geometry"] = StreakGeometry(angle=float(angle))
        overrides["intensity"] = float(intensity)
    else:
        overrides["density"] = float(density)
    return WeatherParams.for_kind(kind, seed, **overrides)


# ---------------------------------------------------------------- compositors

def _check_unit(buf: ImageBuffer, name: str) -> None:
    status = ArrayRangeValidationStrategy(0.0, 1.0, name).validate(buf.data)
    if not status.ok:
        raise ParameterError(status.details)


def _require_single_channel(buf: ImageBuffer, name: str) -> None:
    if buf.channels != 1:
        raise ShapeMismatchError(f"{name} must be single-channel, got {buf.channels} channels")


def _light_array(light: AtmosphericLight, channels: int) -> np.ndarray:
    values = np.atleast_1d(np.asarray(_check_light(light), dtype=np.float64))
    if values.size not in (1, channels):
        raise ShapeMismatchError(f"atmospheric light has {values.size} values for {channels} channels")
    return values


def composite_raindrop(clean: ImageBuffer, mask: ImageBuffer, residual: ImageBuffer) -> ImageBuffer:
    """``I = (1 - M) * C + R``, clamped."""
    _require_single_channel(mask, "raindrop mask")
    _check_unit(mask, "Mask")
    c, m = broadcast_pair(clean, mask)
    _, r = broadcast_pair(clean, residual)
    return ImageBuffer(np.clip((1.0 - m) * c + r, 0.0, 1.0))


def composite_rain(clean: ImageBuffer, streaks: Sequence[ImageBuffer], transmission: ImageBuffer,
                   atmospheric_light: AtmosphericLight = ATMOSPHERIC_LIGHT) -> ImageBuffer:
    """``I = T * (C + sum_i R_i) + (1 - T) * A``, clamped."""
    _require_single_channel(transmission, "transmission")
    _check_unit(transmission, "Transmission")
    c, t = broadcast_pair(clean, transmission)
    scene = c
    for layer in streaks:
        _, r = broadcast_pair(clean, layer)
        if r.min() < 0.0:
            raise ParameterError("rain streak layers must be non-negative")
        scene = scene + r
    a = _light_array(atmospheric_light, clean.channels)
    return ImageBuffer(np.clip(t * scene + (1.0 - t) * a, 0.0, 1.0))


def composite_snow(clean: ImageBuffer, mask: ImageBuffer, flakes: ImageBuffer) -> ImageBuffer:
    """``I = (1 - M) * C + M * S``, clamped."""
    _require_single_channel(mask, "snow mask")
    _check_unit(mask, "Mask")
    c, m = broadcast_pair(clean, mask)
    _, s = broadcast_pair(clean, flakes)
    return ImageBuffer(np.clip((1.0 - m) * c + m * s, 0.0, 1.0))


def composite_haze(clean: ImageBuffer, transmission: ImageBuffer,
                   atmospheric_light: AtmosphericLight = ATMOSPHERIC_LIGHT) -> ImageBuffer:
    """``I = T * C + (1 - T) * A``; serves both fog and haze."""
    _require_single_channel(transmission, "transmission")
    _check_unit(transmission, "Transmission")
    c, t = broadcast_pair(clean, transmission)
    a = _light_array(atmospheric_light, clean.channels)
    return ImageBuffer(np.clip(t * c + (1.0 - t) * a, 0.0, 1.0))


# ---------------------------------------------------------------- generators

def gen_transmission(seed: int, height: int, width: int, beta: float, uniformity: float) -> ImageBuffer:
    """Transmission ``exp(-beta * D)`` over a seeded pseudo-depth field ``D`` in [0, 1].

    ``uniformity`` blends the fbm field toward its own mean, so 1 gives a
    constant map.
    """
    beta = PositiveReal.check(beta)
    uniformity = UnitInterval.check(uniformity)
    rng = generator(seed, "transmission")
    depth = fbm(rng, height, width, octaves=4, base_cell=max(height, width) / 2.0)
    depth = (1.0 - uniformity) * depth + uniformity * depth.mean()
    return ImageBuffer(np.exp(-beta * depth))


def _segment_coverage(ys: np.ndarray, xs: np.ndarray, start: np.ndarray, end: np.ndarray,
                      width: float) -> np.ndarray:
    d = end - start
    length_sq = float(d @ d)
    py, px = ys - start[0], xs - start[1]
    t = np.clip((py * d[0] + px * d[1]) / length_sq, 0.0, 1.0)
    dist = np.hypot(py - t * d[0], px - t * d[1])
    return np.clip(width / 2.0 + 0.5 - dist, 0.0, 1.0)


def _render_layer(rng: np.random.Generator, height: int, width: int, geometry: StreakGeometry) -> np.ndarray:
    layer = np.zeros((height, width))
    count = max(1, int(round(height * width / STREAK_PIXELS_PER_SEGMENT)))
    centres = rng.uniform((0.0, 0.0), (height, width), size=(count, 2))
    angles = np.deg2rad(geometry.angle + rng.uniform(-ANGLE_JITTER, ANGLE_JITTER, size=count))
    half = geometry.length / 2.0
    reach = int(math.ceil(half + geometry.width / 2.0 + 1.0))
    for (cy, cx), theta in zip(centres, angles):
        direction = np.array([math.cos(theta), math.sin(theta)])
        start = np.array([cy, cx]) - half * direction
        end = np.array([cy, cx]) + half * direction
        r0, r1 = max(0, int(cy) - reach), min(height, int(cy) + reach + 1)
        c0, c1 = max(0, int(cx) - reach), min(width, int(cx) + reach + 1)
        if r0 >= r1 or c0 >= c1:
            continue
        ys, xs = np.mgrid[r0:r1, c0:c1].astype(np.float64)
        cover = _segment_coverage(ys + 0.5, xs + 0.5, start, end, geometry.width)
        np.maximum(layer[r0:r1, c0:c1], cover, out=layer[r0:r1, c0:c1])
    return layer


def gen_rain_streaks(seed: int, height: int, width: int, n: int, geometry: StreakGeometry,
                     intensity: float) -> List[ImageBuffer]:
    """``n`` single-channel layers of anti-aliased streaks, peak value ``intensity``.

    Layer ``i`` draws from its own stream, so it does not depend on ``n``.

    Raises:
        ParameterError: Streak length or width below one pixel.
    """
    n = PositiveInt.check(n)
    intensity = UnitInterval.check(intensity)
    if geometry.length < 1.0 or geometry.width < 1.0:
        raise ParameterError(f"degenerate streak geometry: length {geometry.length}, width {geometry.width}")
    layers = []
    for i in range(n):
        coverage = _render_layer(generator(seed, "rain", i), height, width, geometry)
        layers.append(ImageBuffer(coverage * intensity))
    logger.debug("rendered %d rain layers (%dx%d)", n, height, width)
    return layers


def particle_count(height: int, width: int, density: float, radius_range: Tuple[float, float]) -> int:
    """Particles needed for an expected covered fraction of ``density``.

    Uniform centres cover ``1 - exp(-N * pi * E[r^2] / (H * W))`` of the image.
    """
    low, high = radius_range
    mean_sq = (low * low + low * high + high * high) / 3.0
    return int(round(-math.log1p(-min(density, 0.99)) * height * width / (math.pi * mean_sq)))


def gen_particle_field(seed: int, height: int, width: int, density: float,
                       radius_range: Sequence[float], kind: Union[str, DegradationKind],
                       clean: Optional[ImageBuffer] = None) -> Tuple[ImageBuffer, ImageBuffer]:
    """Soft particle mask plus its payload.

    Snow gives soft disks with a per-flake brightness payload ``S``. Raindrop
    gives soft ellipses whose payload ``R`` is the blurred clean image sampled
    through an inverting lens, multiplied by the mask.

    Raises:
        ParameterError: Empty radius range, a kind other than snow/raindrop, or a
            raindrop request without ``clean``.
    """
    kind = DegradationKind.parse(kind)
    if kind not in (DegradationKind.SNOW, DegradationKind.RAINDROP):
        raise ParameterError(f"particle fields exist for snow and raindrop, not {kind.value}")
    low, high = _check_radius_range(radius_range)
    density = ParticleDensity.check(density)
    if kind is DegradationKind.RAINDROP:
        if clean is None:
            raise ParameterError("raindrop payload needs the clean image")
        if (clean.height, clean.width) != (height, width):
            raise ShapeMismatchError(f"clean image is {clean.height}x{clean.width}, field is {height}x{width}")

    rng = generator(seed, "particles")
    count = particle_count(height, width, density, (low, high))
    centres = rng.uniform((0.0, 0.0), (height, width), size=(count, 2))
    radii = rng.uniform(low, high, size=count)
    aspects = rng.uniform(0.8, 1.2, size=count)
    brightness = rng.uniform(0.85, 1.0, size=count)

    mask = np.zeros((height, width))
    owner = np.full((height, width), -1, dtype=np.intp)
    for k in range(count):
        cy, cx = centres[k]
        ry = radii[k] * (aspects[k] if kind is DegradationKind.RAINDROP else 1.0)
        rx = radii[k]
        reach = int(math.ceil(max(rx, ry) + 1.0))
        r0, r1 = max(0, int(cy) - reach), min(height, int(cy) + reach + 1)
        c0, c1 = max(0, int(cx) - reach), min(width, int(cx) + reach + 1)
        if r0 >= r1 or c0 >= c1:
            continue
        ys, xs = np.mgrid[r0:r1, c0:c1].astype(np.float64)
        q = np.hypot((ys + 0.5 - cy) / ry, (xs + 0.5 - cx) / rx)
        cover = np.clip((1.0 - q) * min(rx, ry) + 0.5, 0.0, 1.0)
        window = mask[r0:r1, c0:c1]
        wins = cover > window
        window[wins] = cover[wins]
        owner[r0:r1, c0:c1][wins] = k

    if kind is DegradationKind.SNOW:
        payload = np.zeros((height, width))
        covered = owner >= 0
        payload[covered] = brightness[owner[covered]]
        return ImageBuffer(mask), ImageBuffer(payload)

    blurred = ndimage.gaussian_filter(clean.data, sigma=(2.0, 2.0, 0.0), mode="nearest")
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    src_y = ys.copy()
    src_x = xs.copy()
    covered = owner >= 0
    idx = owner[covered]
    # inverted, half-scale view through each drop
    src_y[covered] = centres[idx, 0] - 0.5 * (ys[covered] + 0.5 - centres[idx, 0])
    src_x[covered] = centres[idx, 1] - 0.5 * (xs[covered] + 0.5 - centres[idx, 1])
    sy = np.clip(np.round(src_y).astype(np.intp), 0, height - 1)
    sx = np.clip(np.round(src_x).astype(np.intp), 0, width - 1)
    residual = mask[:, :, np.newaxis] * blurred[sy, sx, :]
    return ImageBuffer(mask), ImageBuffer(residual)


def synthesize_weather(clean: ImageBuffer, kind: Union[str, DegradationKind],
                       params: WeatherParams) -> Tuple[ImageBuffer, Dict[str, Any]]:
    """Generate and composite one weather effect.

    Returns:
        Tuple[ImageBuffer, Dict[str, Any]]: The weathered image and a metadata
        record (``kind`` plus :meth:`WeatherParams.to_record`).
    """
    kind = DegradationKind.parse(kind)
    h, w = clean.height, clean.width
    if kind is DegradationKind.RAINDROP:
        mask, residual = gen_particle_field(params.seed, h, w, params.density, params.radius_range, kind, clean)
        out = composite_raindrop(clean, mask, residual)
    elif kind is DegradationKind.SNOW:
        mask, flakes = gen_particle_field(params.seed, h, w, params.density, params.radius_range, kind)
        out = composite_snow(clean, mask, flakes)
    elif kind is DegradationKind.RAIN:
        streaks = gen_rain_streaks(params.seed, h, w, params.streak_count, params.geometry, params.intensity)
        veil = gen_transmission(params.seed, h, w, params.beta, params.haze_uniformity)
        out = composite_rain(clean, streaks, veil, params.atmospheric_light)
    else:
        veil = gen_transmission(params.seed, h, w, params.beta, params.haze_uniformity)
        out = composite_haze(clean, veil, params.atmospheric_light)
    logger.debug("weather %s applied (seed %d)", kind.value, params.seed)
    return out, {"kind": kind.value, **params.to_record()}
