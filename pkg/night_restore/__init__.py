"""
.. include:: ../docs/introduction.md
"""
__version__ = "0.1.0"

from .constants import DEFAULT_SUCCESS_MESSAGE
from .status import Status
from .response import Response, StatusResponse
from .value import ValidationStrategy, ConstrainedValue
from .params import EnumValue, StrictValue
from .errors import (
    NightRestoreError,
    ParameterError,
    ShapeMismatchError,
    ImageNotFoundError,
    UnsupportedImageError,
    CorruptImageError,
    ImageWriteError,
    CalibrationError,
    ArchitectureMismatchError,
    ManifestError,
    TrainingDivergedError,
    UnmatchedFilesError,
)
from .imagecore import ImageBuffer, IlluminationMap, load_image, save_image
from .weathersynth import DegradationKind, WeatherParams, synthesize_weather
from .lowlight import ExposureConfig, calibrate_alpha, darken
from .illumest import estimate_illumination, retinex_divide
from .diffcore import DenoiserContract, NoiseSchedule, OracleDenoiser, build_schedule, restore
from .guidednet import Architecture, TinyDenoiser, load_model, save_model
from .seeding import derive_seed, generator
from .tiler import plan_tiles, tiled_restore, seam_score
from .metrics import psnr, ssim
from .manifest import Manifest, ManifestEntry
from .pipeline import SynthesisConfig, RestoreConfig, degrade, synthesize_dataset

__all__ = [
    "ConstrainedValue",
    "ValidationStrategy",
    "StrictValue",
    "EnumValue",
    "DEFAULT_SUCCESS_MESSAGE",
    "Status",
    "StatusResponse",
    "Response",
    "NightRestoreError",
    "ParameterError",
    "ShapeMismatchError",
    "ImageNotFoundError",
    "UnsupportedImageError",
    "CorruptImageError",
    "ImageWriteError",
    "CalibrationError",
    "ArchitectureMismatchError",
    "ManifestError",
    "TrainingDivergedError",
    "UnmatchedFilesError",
    "ImageBuffer",
    "IlluminationMap",
    "load_image",
    "save_image",
    "DegradationKind",
    "WeatherParams",
    "synthesize_weather",
    "ExposureConfig",
    "calibrate_alpha",
    "darken",
    "estimate_illumination",
    "retinex_divide",
    "DenoiserContract",
    "NoiseSchedule",
    "OracleDenoiser",
    "Architecture",
    "TinyDenoiser",
    "load_model",
    "save_model",
    "derive_seed",
    "generator",
    "build_schedule",
    "restore",
    "plan_tiles",
    "tiled_restore",
    "seam_score",
    "psnr",
    "ssim",
    "Manifest",
    "ManifestEntry",
    "SynthesisConfig",
    "RestoreConfig",
    "degrade",
    "synthesize_dataset",
]
