"""PSNR and SSIM with pinned constants.

SSIM runs on the luma channel (0.299, 0.587, 0.114 for RGB) with an 11x11
Gaussian window, sigma 1.5, ``K1 = 0.01``, ``K2 = 0.03`` and peak 1, over the
'valid' region only.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np
from scipy.signal import convolve2d

from .constants import PSNR_CAP, SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW
from .errors import ParameterError, ShapeMismatchError, UnmatchedFilesError
from .imagecore import ImageBuffer, load_image

logger = logging.getLogger(__name__)


def _same_shape(a: ImageBuffer, b: ImageBuffer) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"cannot compare {a.shape} with {b.shape}")


def psnr(a: ImageBuffer, b: ImageBuffer, peak: float = 1.0) -> float:
    """``10 log10(peak^2 / MSE)`` over every sample, capped at 99 dB."""
    _same_shape(a, b)
    mse = float(np.mean((a.data - b.data) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(peak * peak / mse))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """Normalised ``size x size`` Gaussian kernel."""
    half = (size - 1) / 2.0
    y, x = np.ogrid[-half:half + 1, -half:half + 1]
    kernel = np.exp(-(x * x + y * y) / (2.0 * sigma * sigma))
    return kernel / kernel.sum()


def ssim(a: ImageBuffer, b: ImageBuffer) -> float:
    """Mean structural similarity of the luma channels.

    Raises:
        ShapeMismatchError: Different shapes.
        ParameterError: Image smaller than the window.
    """
    _same_shape(a, b)
    if a.height < SSIM_WINDOW or a.width < SSIM_WINDOW:
        raise ParameterError(f"SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {a.height}x{a.width}")
    x, y = a.luma(), b.luma()
    window = gaussian_window()
    c1, c2 = SSIM_K1 ** 2, SSIM_K2 ** 2

    def filt(img: np.ndarray) -> np.ndarray:
        return convolve2d(img, window, mode="valid")

    mu1, mu2 = filt(x), filt(y)
    mu1_sq, mu2_sq, mu1_mu2 = mu1 * mu1, mu2 * mu2, mu1 * mu2
    sigma1_sq = filt(x * x) - mu1_sq
    sigma2_sq = filt(y * y) - mu2_sq
    sigma12 = filt(x * y) - mu1_mu2
    ssim_map = ((2 * mu1_mu2 + c1) * (2 * sigma12 + c2)) / ((mu1_sq + mu2_sq + c1) * (sigma1_sq + sigma2_sq + c2))
    return float(ssim_map.mean())


@dataclass(frozen=True, slots=True)
class ImageScore:
    name: str
    psnr: float
    ssim: float


@dataclass(frozen=True, slots=True)
class MetricReport:
    """Per-image scores and their arithmetic means."""
    rows: Tuple[ImageScore, ...]

    @property
    def mean_psnr(self) -> float:
        return float(np.mean([r.psnr for r in self.rows])) if self.rows else float("nan")

    @property
    def mean_ssim(self) -> float:
        return float(np.mean([r.ssim for r in self.rows])) if self.rows else float("nan")

    def to_lines(self) -> List[str]:
        """One JSON object per image, then one named ``mean``."""
        records = [{"name": r.name, "psnr": r.psnr, "ssim": r.ssim} for r in self.rows]
        records.append({"name": "mean", "psnr": self.mean_psnr, "ssim": self.mean_ssim})
        return [json.dumps(rec, sort_keys=True) for rec in records]

    def to_table(self) -> str:
        width = max([len(r.name) for r in self.rows] + [4])
        lines = [f"{'image':<{width}}  {'PSNR':>8}  {'SSIM':>7}"]
        lines += [f"{r.name:<{width}}  {r.psnr:8.3f}  {r.ssim:7.4f}" for r in self.rows]
        lines.append(f"{'mean':<{width}}  {self.mean_psnr:8.3f}  {self.mean_ssim:7.4f}")
        return "\n".join(lines)


def evaluate_pairs(pairs: Sequence[Tuple[str, ImageBuffer, ImageBuffer]]) -> MetricReport:
    return MetricReport(tuple(ImageScore(name, psnr(p, g), ssim(p, g)) for name, p, g in pairs))


def evaluate_directories(pred_dir: Union[str, Path], gt_dir: Union[str, Path]) -> MetricReport:
    """Score every PNG in ``pred_dir`` against the same filename in ``gt_dir``.

    Raises:
        UnmatchedFilesError: Filenames do not pair up, or there is nothing to compare.
    """
    preds = {p.name for p in Path(pred_dir).glob("*.png")}
    truths = {p.name for p in Path(gt_dir).glob("*.png")}
    if preds != truths or not preds:
        raise UnmatchedFilesError(missing_in_truth=preds - truths, missing_in_prediction=truths - preds)
    pairs = []
    for name in sorted(preds):
        pairs.append((name, load_image(Path(pred_dir) / name), load_image(Path(gt_dir) / name)))
    report = evaluate_pairs(pairs)
    logger.info("evaluated %d images: PSNR %.3f dB, SSIM %.4f", len(pairs), report.mean_psnr, report.mean_ssim)
    return report
