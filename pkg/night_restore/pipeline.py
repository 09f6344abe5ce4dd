"""End-to-end pipelines: dataset synthesis, manifest replay and directory restoration.

Synthesis always applies the weather first and darkens the result afterwards;
the order is not configurable. Per-image randomness flows from one root seed::

    image_seed   = derive_seed(seed, "image", index)
    weather_seed = derive_seed(image_seed, "weather", kind)
    parameters   <- generator(weather_seed, "params")
    exposure e   <- generator(image_seed, "exposure")
    maps         <- generator(image_seed, "exposure", iteration)
    latent       <- generator(derive_seed(seed, "image", index), "latent")

Images are processed by a thread pool; results are collected in input order so
outputs do not depend on the number of workers.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .constants import (
    CURVE_ITERATIONS,
    DEFAULT_VARIATION,
    EXPOSURE_RANGE,
    GRID_STEP,
    PATCH_SIZE,
    SAMPLING_STEPS,
)
from .diffcore import DenoiserContract, NoiseSchedule, OracleDenoiser, build_schedule
from .errors import ImageNotFoundError, ParameterError
from .illumest import estimate_illumination
from .imagecore import ImageBuffer, load_image, quantize, save_image
from .lowlight import ExposureConfig, apply_exposure, sample_exposure
from .manifest import MANIFEST_NAME, Manifest, ManifestEntry, relative_to
from .params import ExposureTarget, ParticleDensity, PositiveInt, PositiveReal, Seed, VariationAmplitude
from .seeding import derive_seed, generator
from .tiler import tiled_restore
from .weathersynth import DegradationKind, WeatherParams, sample_weather_params, synthesize_weather

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def degrade(clean: ImageBuffer, kind: Union[str, DegradationKind], weather: WeatherParams,
            exposure: ExposureConfig) -> ImageBuffer:
    """Weather, then darken."""
    weathered, _ = synthesize_weather(clean, kind, weather)
    return apply_exposure(weathered, exposure)


def list_images(directory: PathLike) -> List[Path]:
    """Sorted PNG files directly inside ``directory``.

    Raises:
        ImageNotFoundError: Missing directory or no PNG inside it.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise ImageNotFoundError(f"no such directory: {directory}")
    paths = sorted(p for p in directory.iterdir() if p.suffix.lower() == ".png" and p.is_file())
    if not paths:
        raise ImageNotFoundError(f"no PNG images in {directory}")
    return paths


def _ordered_map(fn: Callable, items: Sequence, jobs: int) -> list:
    if jobs == 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------- synthesis

@dataclass(frozen=True, slots=True)
class SynthesisConfig:
    """Settings of one ``synth`` run.

    Attributes:
        kind: Degradation kind applied to every image.
        seed: Root seed.
        count: Use only the first ``count`` inputs (sorted by name); ``None`` uses all.
        exposure_range: Bounds of the uniform exposure draw.
        variation: Amplitude of the per-pixel darkening variation.
        curve_iterations: Curve iterations ``n``.
        beta: Fixed extinction coefficient instead of the sampled one.
        density: Fixed particle density instead of the sampled one.
        jobs: Worker threads.
    """
    kind: DegradationKind
    seed: int = 0
    count: Optional[int] = None
    exposure_range: Tuple[float, float] = EXPOSURE_RANGE
    variation: float = DEFAULT_VARIATION
    curve_iterations: int = CURVE_ITERATIONS
    beta: Optional[float] = None
    density: Optional[float] = None
    jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kind", DegradationKind.parse(self.kind))
        object.__setattr__(self, "seed", Seed.check(self.seed))
        if self.count is not None:
            object.__setattr__(self, "count", PositiveInt.check(self.count))
        low, high = (ExposureTarget.check(v) for v in self.exposure_range)
        if low > high:
            raise ParameterError(f"exposure range is empty: [{low}, {high}]")
        object.__setattr__(self, "exposure_range", (low, high))
        object.__setattr__(self, "variation", VariationAmplitude.check(self.variation))
        object.__setattr__(self, "curve_iterations", PositiveInt.check(self.curve_iterations))
        if self.beta is not None:
            object.__setattr__(self, "beta", PositiveReal.check(self.beta))
        if self.density is not None:
            object.__setattr__(self, "density", ParticleDensity.check(self.density))
        object.__setattr__(self, "jobs", PositiveInt.check(self.jobs))

    def weather_for(self, image_seed: int) -> WeatherParams:
        weather_seed = derive_seed(image_seed, "weather", self.kind.value)
        params = sample_weather_params(self.kind, generator(weather_seed, "params"), weather_seed)
        if self.beta is not None:
            params = replace(params, beta=self.beta)
        if self.density is not None:
            params = replace(params, density=self.density)
        return params

    def exposure_for(self, image_seed: int) -> ExposureConfig:
        e = sample_exposure(generator(image_seed, "exposure"), *self.exposure_range)
        return ExposureConfig(e, self.curve_iterations, self.variation, image_seed)


def synthesize_dataset(input_dir: PathLike, output_dir: PathLike, config: SynthesisConfig) -> Manifest:
    """Degrade every clean PNG of ``input_dir`` into ``output_dir`` and write the manifest there.

    Outputs keep the clean file names.

    Raises:
        ImageNotFoundError: No PNG in ``input_dir``.
        ParameterError: ``output_dir`` is ``input_dir``.
        ImageWriteError: An output cannot be written.
    """
    sources = list_images(input_dir)
    if config.count is not None:
        sources = sources[:config.count]
    out = Path(output_dir)
    if out.resolve() == Path(input_dir).resolve():
        raise ParameterError("output directory must differ from the input directory")
    out.mkdir(parents=True, exist_ok=True)

    def one(item: Tuple[int, Path]) -> ManifestEntry:
        index, source = item
        image_seed = derive_seed(config.seed, "image", index)
        weather = config.weather_for(image_seed)
        exposure = config.exposure_for(image_seed)
        target = out / source.name
        save_image(degrade(load_image(source), config.kind, weather, exposure), target)
        logger.debug("synthesized %s (e=%.4f)", source.name, exposure.e)
        return ManifestEntry(
            clean_path=relative_to(source, out),
            degraded_path=relative_to(target, out),
            kind=config.kind.value,
            exposure=exposure.e,
            seed=image_seed,
            weather=weather.to_record(),
            variation=exposure.variation_amplitude,
            curve_iterations=exposure.n,
        )

    entries = _ordered_map(one, list(enumerate(sources)), config.jobs)
    manifest = Manifest(tuple(entries))
    manifest.write(out / MANIFEST_NAME)
    logger.info("synthesized %d %s images into %s", len(entries), config.kind.value, out)
    return manifest


def reproduce_entry(entry: ManifestEntry, base_dir: PathLike) -> ImageBuffer:
    """Re-run the synthesis of one entry from its recorded parameters."""
    clean = load_image(Path(base_dir) / entry.clean_path)
    weather = WeatherParams.from_record(entry.weather)
    exposure = ExposureConfig(entry.exposure, entry.curve_iterations, entry.variation, entry.seed)
    return degrade(clean, entry.kind, weather, exposure)


def verify_manifest(path: PathLike) -> List[str]:
    """Regenerate every entry and compare the 8-bit samples with the stored output.

    Returns:
        List[str]: Degraded paths whose bytes differ; empty when all match.

    Raises:
        ManifestError: Unreadable manifest or missing files.
    """
    path = Path(path)
    base = path.parent
    manifest = Manifest.read(path)
    manifest.validate(base)
    mismatched = []
    for entry in manifest.entries:
        expected = quantize(load_image(base / entry.degraded_path))
        if not np.array_equal(quantize(reproduce_entry(entry, base)), expected):
            mismatched.append(entry.degraded_path)
    logger.info("verified %d entries, %d mismatched", len(manifest.entries), len(mismatched))
    return mismatched


# ---------------------------------------------------------------- restoration

@dataclass(frozen=True, slots=True)
class RestoreConfig:
    patch: int = PATCH_SIZE
    step: int = GRID_STEP
    sampling_steps: int = SAMPLING_STEPS
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "patch", PositiveInt.check(self.patch))
        object.__setattr__(self, "step", PositiveInt.check(self.step))
        object.__setattr__(self, "sampling_steps", PositiveInt.check(self.sampling_steps))
        object.__setattr__(self, "seed", Seed.check(self.seed))
        object.__setattr__(self, "jobs", PositiveInt.check(self.jobs))


DenoiserFactory = Callable[[str, ImageBuffer], DenoiserContract]


def model_denoiser(denoiser: DenoiserContract) -> DenoiserFactory:
    """The same denoiser for every image."""
    return lambda name, degraded: denoiser


def oracle_denoiser(clean_dir: PathLike, sched: NoiseSchedule) -> DenoiserFactory:
    """An :class:`OracleDenoiser` aimed at the same-named file of ``clean_dir``."""
    clean_dir = Path(clean_dir)

    def factory(name: str, degraded: ImageBuffer) -> DenoiserContract:
        return OracleDenoiser(load_image(clean_dir / name), sched)

    return factory


def restore_image(degraded: ImageBuffer, denoiser: DenoiserContract, sched: NoiseSchedule,
                  config: RestoreConfig, index: int = 0) -> ImageBuffer:
    """Illumination estimate, then tiled sampling from the per-image latent stream."""
    illumination = estimate_illumination(degraded)
    rng = generator(derive_seed(config.seed, "image", index), "latent")
    return tiled_restore(degraded, illumination, denoiser, sched, config.sampling_steps,
                         config.patch, config.step, rng, config.jobs)


def restore_directory(input_dir: PathLike, output_dir: PathLike, factory: DenoiserFactory,
                      config: RestoreConfig = RestoreConfig(),
                      sched: Optional[NoiseSchedule] = None) -> List[Path]:
    """Restore every PNG of ``input_dir`` into ``output_dir`` under the same name.

    Per-image timing is logged at INFO.

    Raises:
        ImageNotFoundError: No PNG in ``input_dir``.
        ParameterError: Patch larger than an image.
    """
    sched = sched or build_schedule()
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for index, source in enumerate(list_images(input_dir)):
        started = time.perf_counter()
        degraded = load_image(source)
        restored = restore_image(degraded, factory(source.name, degraded), sched, config, index)
        save_image(restored, out / source.name)
        logger.info("restored %s in %.2f s", source.name, time.perf_counter() - started)
        written.append(out / source.name)
    return written
