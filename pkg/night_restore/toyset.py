"""Small training sets of ``(clean, degraded, illumination)`` triples.

The network expects three-channel patches with even sides; grayscale sources are
replicated across channels.
"""
from __future__ import annotations

import logging
from pathlib import Path
from typing import List, Union

import numpy as np

from .errors import ParameterError
from .guidednet import Triple
from .illumest import estimate_illumination
from .imagecore import ImageBuffer, load_image
from .manifest import Manifest
from .noise import fbm
from .params import PositiveInt, Seed
from .pipeline import SynthesisConfig, degrade
from .seeding import derive_seed, generator
from .weathersynth import DegradationKind

logger = logging.getLogger(__name__)

TOY_SIZE = 16


def _patch_size(size: int) -> int:
    size = PositiveInt.check(size)
    if size % 2:
        raise ParameterError(f"toy patches need an even side, got {size}")
    return size


def _rgb(buf: ImageBuffer) -> ImageBuffer:
    if buf.channels == 3:
        return buf
    return ImageBuffer(np.repeat(buf.data, 3, axis=2))


def toy_scene(seed: int, size: int = TOY_SIZE) -> ImageBuffer:
    """A smooth colour scene inside [0.1, 1]."""
    rng = generator(seed, "scene")
    base = fbm(rng, size, size, octaves=3, base_cell=size / 2.0)
    detail = np.stack([fbm(rng, size, size, octaves=2, base_cell=size / 4.0) for _ in range(3)], axis=-1)
    return ImageBuffer(0.1 + 0.6 * base[:, :, np.newaxis] + 0.3 * detail)


def make_toy_dataset(count: int = 64, size: int = TOY_SIZE, seed: int = 0) -> List[Triple]:
    """Procedural scenes degraded by the synthesis pipeline, cycling through every kind."""
    count, size, seed = PositiveInt.check(count), _patch_size(size), Seed.check(seed)
    kinds = list(DegradationKind)
    triples = []
    for i in range(count):
        config = SynthesisConfig(kinds[i % len(kinds)], seed)
        image_seed = derive_seed(seed, "image", i)
        clean = toy_scene(image_seed, size)
        degraded = degrade(clean, config.kind, config.weather_for(image_seed), config.exposure_for(image_seed))
        triples.append((clean, degraded, estimate_illumination(degraded)))
    logger.debug("built %d toy triples of %dx%d", count, size, size)
    return triples


def triples_from_manifest(path: Union[str, Path], size: int = TOY_SIZE) -> List[Triple]:
    """Centre ``size x size`` crops of every manifest entry.

    The illumination map is estimated on the whole degraded image and then
    cropped with it.

    Raises:
        ManifestError: Unreadable manifest or missing files.
        ParameterError: An image smaller than ``size``.
    """
    size = _patch_size(size)
    path = Path(path)
    manifest = Manifest.read(path)
    manifest.validate(path.parent)
    triples = []
    for entry in manifest.entries:
        clean = _rgb(load_image(path.parent / entry.clean_path))
        degraded = _rgb(load_image(path.parent / entry.degraded_path))
        if degraded.height < size or degraded.width < size:
            raise ParameterError(f"{entry.degraded_path} is smaller than {size}x{size}")
        illumination = estimate_illumination(degraded)
        row, col = (degraded.height - size) // 2, (degraded.width - size) // 2
        triples.append((clean.crop(row, col, size, size), degraded.crop(row, col, size, size),
                        illumination.crop(row, col, size, size)))
    return triples
