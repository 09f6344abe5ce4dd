"""Deterministic random streams.

All randomness descends from one integer seed through named sub-streams, so a
single image, weather layer or exposure map can be regenerated without replaying
anything else. Streams are counter-based (``Philox``) and keyed by a
``SeedSequence`` spawn key built from the stream path.

Sub-seed schedule::

    image/<index>                 per-image seed recorded in the manifest
      weather/<kind>              weather generator root for that image
        rain/<layer>              one stream per streak layer
        particles                 snow flakes / raindrop lenses
        transmission              pseudo-depth field
        params                    sampled weather parameters
      exposure                    exposure target draw
      exposure/<iteration>        darkening variation map per curve iteration
      scene                       procedural clean image of a toy example
    init, examples                toy-training weights and (t, noise) draws
    latent                        x_T for restoration
"""
import zlib
from typing import Tuple, Union

import numpy as np

from .params import Seed

PathElement = Union[int, str]


def _key(element: PathElement) -> int:
    if isinstance(element, str):
        return zlib.crc32(element.encode("utf-8"))
    if isinstance(element, (int, np.integer)) and not isinstance(element, bool) and element >= 0:
        return int(element)
    raise TypeError(f"stream path elements must be names or non-negative ints, got {element!r}")


def spawn_key(*path: PathElement) -> Tuple[int, ...]:
    """Map a stream path such as ``("image", 3, "weather")`` to a spawn key."""
    return tuple(_key(p) for p in path)


def seed_sequence(seed: int, *path: PathElement) -> np.random.SeedSequence:
    return np.random.SeedSequence(Seed.check(seed), spawn_key=spawn_key(*path))


def generator(seed: int, *path: PathElement) -> np.random.Generator:
    """Return an independent generator for the stream ``path`` under ``seed``.

    Example:
        >>> a = generator(7, "rain", 0).random()
        >>> a == generator(7, "rain", 0).random()
        True
    """
    return np.random.Generator(np.random.Philox(seed_sequence(seed, *path)))


def derive_seed(seed: int, *path: PathElement) -> int:
    """64-bit child seed for ``path``; recorded so a stream can be rebuilt from metadata."""
    return int(seed_sequence(seed, *path).generate_state(1, dtype=np.uint64)[0])
