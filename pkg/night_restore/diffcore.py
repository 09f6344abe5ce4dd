"""Noise schedule, forward noising and deterministic implicit reverse sampling.

Timesteps index ``1..T``; index 0 is the clean end of the chain, where the
cumulative signal retention ``alpha_bar`` is exactly 1. Sampling is fully
deterministic once ``x_T`` is drawn (no fresh noise per step).

A denoiser is any callable following :class:`DenoiserContract`. It receives
the latent, the degraded conditioning image and the illumination map as
``(H, W, C)`` float arrays and returns the predicted noise with the latent's
shape.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, List, Protocol, runtime_checkable

import numpy as np

from .constants import BETA_END, BETA_START, DIFFUSION_STEPS, SAMPLING_STEPS
from .errors import ParameterError, ShapeMismatchError
from .imagecore import ImageBuffer
from .params import PositiveInt
from .strategies import FiniteArrayValidationStrategy

logger = logging.getLogger(__name__)

PredictFn = Callable[[np.ndarray, int], np.ndarray]


@runtime_checkable
class DenoiserContract(Protocol):
    def __call__(self, x_t: np.ndarray, condition: np.ndarray, illumination: np.ndarray,
                 t: int) -> np.ndarray:  # pragma: no cover
        ...


@dataclass(frozen=True, slots=True, eq=False)
class NoiseSchedule:
    """Per-step variances and their cumulative products.

    Attributes:
        betas: ``beta_1..beta_T``.
        alpha_bar: ``alpha_bar_0..alpha_bar_T`` with ``alpha_bar_0 = 1``.
    """
    betas: np.ndarray
    alpha_bar: np.ndarray

    @classmethod
    def from_betas(cls, betas) -> "NoiseSchedule":
        """Build from explicit variances; products accumulate in extended precision.

        Raises:
            ParameterError: Empty sequence or any beta outside (0, 1).
        """
        betas = np.array(betas, dtype=np.float64).reshape(-1)
        if betas.size == 0:
            raise ParameterError("schedule needs at least one step")
        status = FiniteArrayValidationStrategy().validate(betas)
        if not status.ok or betas.min() <= 0.0 or betas.max() >= 1.0:
            raise ParameterError(f"betas must lie strictly inside (0, 1), got [{betas.min()}, {betas.max()}]")
        retain = np.cumprod(1.0 - betas.astype(np.longdouble))
        alpha_bar = np.concatenate(([1.0], retain.astype(np.float64)))
        betas.setflags(write=False)
        alpha_bar.setflags(write=False)
        return cls(betas, alpha_bar)

    @property
    def T(self) -> int:
        return self.betas.size

    def sqrt_alpha_bar(self, t: int) -> float:
        return float(np.sqrt(self.alpha_bar[t]))

    def sqrt_one_minus_alpha_bar(self, t: int) -> float:
        return float(np.sqrt(1.0 - self.alpha_bar[t]))

    def check_timestep(self, t: int, low: int = 0) -> int:
        t = int(t)
        if not low <= t <= self.T:
            raise ParameterError(f"timestep must lie in [{low}, {self.T}], got {t}")
        return t


def build_schedule(T: int = DIFFUSION_STEPS, beta_start: float = BETA_START,
                   beta_end: float = BETA_END) -> NoiseSchedule:
    """Linear betas from ``beta_start`` to ``beta_end`` over ``T`` steps.

    Raises:
        ParameterError: Unless ``0 < beta_start <= beta_end < 1``.
    """
    T = PositiveInt.check(T)
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise ParameterError(f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    return NoiseSchedule.from_betas(np.linspace(beta_start, beta_end, T, dtype=np.float64))


def _noise_like(x0: ImageBuffer, eps) -> np.ndarray:
    noise = eps.data if isinstance(eps, ImageBuffer) else np.asarray(eps, dtype=np.float64)
    if noise.shape != x0.shape:
        raise ShapeMismatchError(f"noise shape {noise.shape} does not match image shape {x0.shape}")
    return noise


def forward_sample(x0: ImageBuffer, t: int, eps, sched: NoiseSchedule) -> ImageBuffer:
    """``sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps``.

    ``t = 0`` returns ``x0`` (``alpha_bar_0 = 1``).
    """
    t = sched.check_timestep(t)
    noise = _noise_like(x0, eps)
    return ImageBuffer(sched.sqrt_alpha_bar(t) * x0.data + sched.sqrt_one_minus_alpha_bar(t) * noise)


def training_loss(denoiser: DenoiserContract, x0: ImageBuffer, condition: ImageBuffer,
                  illumination: ImageBuffer, t: int, eps, sched: NoiseSchedule) -> float:
    """Mean squared error between the true and predicted noise at step ``t``."""
    t = sched.check_timestep(t, low=1)
    noise = _noise_like(x0, eps)
    x_t = forward_sample(x0, t, noise, sched)
    pred = np.asarray(denoiser(x_t.data, condition.data, illumination.data, t), dtype=np.float64)
    if pred.shape != noise.shape:
        raise ShapeMismatchError(f"denoiser returned {pred.shape}, expected {noise.shape}")
    return float(np.mean((noise - pred) ** 2))


def make_subsequence(T: int = DIFFUSION_STEPS, S: int = SAMPLING_STEPS) -> List[int]:
    """Decreasing timesteps ``round(T * k / S)`` for ``k = S..1``, rounded half up, duplicates dropped.

    Example:
        >>> make_subsequence(1000, 40)[:3], make_subsequence(1000, 40)[-1]
        ([1000, 975, 950], 25)
    """
    T, S = PositiveInt.check(T), PositiveInt.check(S)
    if S > T:
        raise ParameterError(f"sampling steps {S} exceed diffusion steps {T}")
    steps: List[int] = []
    for k in range(S, 0, -1):
        t = (2 * T * k + S) // (2 * S)
        if not steps or steps[-1] != t:
            steps.append(t)
    return steps


def _ddim_update(x_t: np.ndarray, eps: np.ndarray, t: int, t_prev: int, sched: NoiseSchedule) -> np.ndarray:
    x0_hat = (x_t - sched.sqrt_one_minus_alpha_bar(t) * eps) / sched.sqrt_alpha_bar(t)
    if t_prev == 0:
        return x0_hat
    return sched.sqrt_alpha_bar(t_prev) * x0_hat + sched.sqrt_one_minus_alpha_bar(t_prev) * eps


def ddim_step(x_t: ImageBuffer, eps_pred: ImageBuffer, t: int, t_prev: int, sched: NoiseSchedule) -> ImageBuffer:
    """One deterministic implicit step from ``t`` to ``t_prev``.

    ``t_prev == t`` returns ``x_t``; ``t_prev == 0`` returns the clean estimate.

    Raises:
        ParameterError: Unless ``0 <= t_prev <= t <= T`` and ``t >= 1``.
    """
    t = sched.check_timestep(t, low=1)
    t_prev = sched.check_timestep(t_prev)
    if t_prev > t:
        raise ParameterError(f"implicit steps run backwards in time, got t={t} -> t_prev={t_prev}")
    if eps_pred.shape != x_t.shape:
        raise ShapeMismatchError(f"noise shape {eps_pred.shape} does not match latent shape {x_t.shape}")
    if t_prev == t:
        return x_t
    return ImageBuffer(_ddim_update(x_t.data, eps_pred.data, t, t_prev, sched))


def reverse_chain(x_T: np.ndarray, predict: PredictFn, sched: NoiseSchedule, S: int) -> np.ndarray:
    """Walk the latent from ``T`` down to 0 along :func:`make_subsequence`.

    ``predict(x_t, t)`` supplies the noise estimate for each visited step.
    """
    steps = make_subsequence(sched.T, S)
    x = x_T
    for t, t_prev in zip(steps, steps[1:] + [0]):
        eps = np.asarray(predict(x, t), dtype=np.float64)
        if eps.shape != x.shape:
            raise ShapeMismatchError(f"denoiser returned {eps.shape}, expected {x.shape}")
        x = _ddim_update(x, eps, t, t_prev, sched)
    status = FiniteArrayValidationStrategy().validate(x)
    if not status.ok:
        raise ParameterError(f"reverse chain diverged: {status.details}")
    return x


def restore(condition: ImageBuffer, illumination: ImageBuffer, denoiser: DenoiserContract,
            sched: NoiseSchedule, S: int, rng: np.random.Generator) -> ImageBuffer:
    """Sample ``x_T ~ N(0, I)`` with the conditioning's shape and run the reverse chain.

    Returns:
        ImageBuffer: The final estimate clamped to [0, 1].
    """
    x_T = rng.standard_normal(condition.shape)
    c, illum = condition.data, illumination.data
    x0 = reverse_chain(x_T, lambda x, t: denoiser(x, c, illum, t), sched, S)
    logger.debug("restored %dx%d in %d steps", condition.height, condition.width, S)
    return ImageBuffer(np.clip(x0, 0.0, 1.0))


class OracleDenoiser:
    """Returns the exact noise that separates ``x_t`` from a known clean target.

    Used to check sampler plumbing: any reverse chain driven by it lands on the
    target. :meth:`for_region` narrows it to a tile.
    """

    def __init__(self, target: ImageBuffer, sched: NoiseSchedule):
        self.target = target.data
        self.sched = sched

    def __call__(self, x_t: np.ndarray, condition: np.ndarray, illumination: np.ndarray, t: int) -> np.ndarray:
        if x_t.shape != self.target.shape:
            raise ShapeMismatchError(f"oracle target is {self.target.shape}, latent is {x_t.shape}")
        return (x_t - self.sched.sqrt_alpha_bar(t) * self.target) / self.sched.sqrt_one_minus_alpha_bar(t)

    def for_region(self, row: int, col: int, size: int) -> "OracleDenoiser":
        crop = ImageBuffer(self.target[row:row + size, col:col + size, :])
        return OracleDenoiser(crop, self.sched)
