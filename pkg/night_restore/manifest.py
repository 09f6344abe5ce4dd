"""Dataset manifests.

A manifest lists, for every synthesized image, the clean source, the degraded
output and every parameter needed to regenerate it. Files are UTF-8 JSON with
sorted keys and a trailing newline; paths are stored relative to the manifest's
own directory.
"""
from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, Tuple, Union

from .constants import CURVE_ITERATIONS, MANIFEST_VERSION
from .errors import ManifestError, ParameterError
from .weathersynth import DegradationKind, WeatherParams

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True, slots=True)
class ManifestEntry:
    """One synthesized image.

    Attributes:
        clean_path: Source image, relative to the manifest.
        degraded_path: Output image, relative to the manifest.
        kind: Degradation kind name.
        exposure: Exposure target ``e``.
        seed: Per-image seed; darkening maps derive from it.
        weather: Weather metadata record (includes the weather seed).
        variation: Darkening variation amplitude.
        curve_iterations: Curve iterations ``n``.
    """
    clean_path: str
    degraded_path: str
    kind: str
    exposure: float
    seed: int
    weather: Dict[str, Any]
    variation: float
    curve_iterations: int = CURVE_ITERATIONS

    def __post_init__(self):
        try:
            DegradationKind.parse(self.kind)
            WeatherParams.from_record(self.weather)
        except (KeyError, TypeError, ParameterError) as e:
            raise ManifestError(f"invalid entry for {self.degraded_path!r}: {e}") from e


@dataclass(frozen=True, slots=True)
class Manifest:
    entries: Tuple[ManifestEntry, ...]
    version: str = MANIFEST_VERSION

    def to_json(self) -> str:
        doc = {"version": self.version, "entries": [asdict(e) for e in self.entries]}
        return json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Manifest":
        try:
            doc = json.loads(text)
            version = doc["version"]
            entries = tuple(ManifestEntry(**e) for e in doc["entries"])
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise ManifestError(f"malformed manifest: {e}") from e
        if version != MANIFEST_VERSION:
            raise ManifestError(f"unsupported manifest version {version!r}")
        return cls(entries, version)

    def write(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")
        logger.debug("wrote manifest %s (%d entries)", path, len(self.entries))

    @classmethod
    def read(cls, path: Union[str, Path]) -> "Manifest":
        path = Path(path)
        if not path.is_file():
            raise ManifestError(f"no manifest at {path}")
        return cls.from_json(path.read_text(encoding="utf-8"))

    def validate(self, base_dir: Union[str, Path]) -> None:
        """Check that every referenced file exists under ``base_dir``.

        Raises:
            ManifestError: Listing every missing file.
        """
        base = Path(base_dir)
        missing = [p for e in self.entries for p in (e.clean_path, e.degraded_path) if not (base / p).is_file()]
        if missing:
            raise ManifestError(f"manifest references missing files: {', '.join(missing)}")


def relative_to(path: Union[str, Path], base_dir: Union[str, Path]) -> str:
    """``path`` relative to ``base_dir`` with forward slashes."""
    return Path(os.path.relpath(Path(path).resolve(), Path(base_dir).resolve())).as_posix()
