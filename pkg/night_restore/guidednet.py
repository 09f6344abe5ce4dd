"""Illumination-guided noise predictor at toy scale.

The backbone sees the latent and the degraded image concatenated along the
channel axis. A two-level encoder turns the illumination map into a feature
pyramid ``[F_0, F_1]`` at full and half resolution; at each level the backbone
features ``L_i`` receive a residual cross-attention update::

    Q = phi(F_i) W_Q,  K = phi(L_i) W_K,  V = phi(L_i) W_V
    L_i <- L_i + softmax(Q K^T / sqrt(d)) V

with ``phi`` the row-major spatial flatten. On 16x16 patches the two sites sit
at 16x16 and 8x8.

Everything runs on ``numpy`` with a hand-derived backward pass; the parameters
live in one flat ``float64`` vector whose layout is fixed by an
:class:`Architecture`. Finite differences only validate the gradient.

Model files::

    b"IGDN" | uint16 version | uint32 n | n bytes of JSON descriptor | uint64 count | count x float64
"""
from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .constants import MODEL_FORMAT_VERSION, MODEL_MAGIC
from .diffcore import NoiseSchedule, build_schedule
from .errors import (
    ArchitectureMismatchError,
    ImageWriteError,
    ParameterError,
    ShapeMismatchError,
    TrainingDivergedError,
)
from .imagecore import ImageBuffer
from .params import NonNegativeReal, PositiveInt, PositiveReal, Seed
from .seeding import generator
from .strategies import FiniteArrayValidationStrategy

logger = logging.getLogger(__name__)

LATENT_CHANNELS = 3
CONDITION_CHANNELS = 3
INPUT_CHANNELS = LATENT_CHANNELS + CONDITION_CHANNELS

Triple = Tuple[ImageBuffer, ImageBuffer, ImageBuffer]


# ---------------------------------------------------------------- architecture

@dataclass(frozen=True, slots=True)
class Architecture:
    """Widths of the toy network.

    The network has a single resolution drop. On the way down, the stride-1
    ``in`` conv gives the full-resolution map (first injection site) and the
    stride-2 ``down`` conv gives the half-resolution map (second site). On the
    way up, ``up`` returns to full resolution and ``mid`` follows the skip sum.
    There is no quarter-resolution level.

    Attributes:
        c0: Channels at full resolution (first injection site).
        c1: Channels at half resolution (second injection site).
        temb: Sinusoidal time-embedding width; must be even.
        inject_illumination: When False the attention updates are skipped and the
            encoder and attention parameters receive no gradient.
    """
    c0: int = 8
    c1: int = 12
    temb: int = 8
    inject_illumination: bool = True

    def __post_init__(self):
        object.__setattr__(self, "c0", PositiveInt.check(self.c0))
        object.__setattr__(self, "c1", PositiveInt.check(self.c1))
        object.__setattr__(self, "temb", PositiveInt.check(self.temb))
        if self.temb % 2:
            raise ParameterError(f"time embedding width must be even, got {self.temb}")
        if not isinstance(self.inject_illumination, bool):
            raise ParameterError("inject_illumination must be a bool")

    def layout(self) -> List[Tuple[str, Tuple[int, ...]]]:
        """Ordered ``(name, shape)`` of every parameter block."""
        c0, c1, te = self.c0, self.c1, self.temb
        return [
            ("enc0.w", (3, 3, 1, c0)), ("enc0.b", (c0,)),
            ("enc1.w", (3, 3, c0, c1)), ("enc1.b", (c1,)),
            ("time0.w", (te, c0)), ("time0.b", (c0,)),
            ("time1.w", (te, c1)), ("time1.b", (c1,)),
            ("in.w", (3, 3, INPUT_CHANNELS, c0)), ("in.b", (c0,)),
            ("att0.q", (c0, c0)), ("att0.k", (c0, c0)), ("att0.v", (c0, c0)),
            ("down.w", (3, 3, c0, c1)), ("down.b", (c1,)),
            ("att1.q", (c1, c1)), ("att1.k", (c1, c1)), ("att1.v", (c1, c1)),
            ("up.w", (3, 3, c1, c0)), ("up.b", (c0,)),
            ("mid.w", (3, 3, c0, c0)), ("mid.b", (c0,)),
            ("out.w", (3, 3, c0, LATENT_CHANNELS)), ("out.b", (LATENT_CHANNELS,)),
            ("skip.w", (INPUT_CHANNELS, LATENT_CHANNELS)),
        ]

    @property
    def param_count(self) -> int:
        return sum(int(np.prod(shape)) for _, shape in self.layout())

    def descriptor(self) -> Dict[str, Union[int, bool, str]]:
        return {"name": "illumination-guided-denoiser", "c0": self.c0, "c1": self.c1,
                "temb": self.temb, "inject_illumination": self.inject_illumination}

    @classmethod
    def from_descriptor(cls, desc: Dict) -> "Architecture":
        try:
            return cls(desc["c0"], desc["c1"], desc["temb"], desc["inject_illumination"])
        except (KeyError, TypeError, ParameterError) as e:
            raise ArchitectureMismatchError(f"bad architecture descriptor {desc!r}: {e}") from e

    def slices(self) -> Dict[str, Tuple[slice, Tuple[int, ...]]]:
        out, offset = {}, 0
        for name, shape in self.layout():
            size = int(np.prod(shape))
            out[name] = (slice(offset, offset + size), shape)
            offset += size
        return out

    def unpack(self, theta: np.ndarray) -> Dict[str, np.ndarray]:
        """Named views into ``theta``."""
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.param_count,):
            raise ArchitectureMismatchError(
                f"parameter vector has {theta.size} entries, architecture needs {self.param_count}")
        return {name: theta[sl].reshape(shape) for name, (sl, shape) in self.slices().items()}

    def pack(self, blocks: Dict[str, np.ndarray]) -> np.ndarray:
        return np.concatenate([np.asarray(blocks[name], dtype=np.float64).reshape(-1)
                               for name, _ in self.layout()])

    def mask_of(self, *prefixes: str) -> np.ndarray:
        """Boolean vector marking every coordinate whose block name starts with a prefix."""
        mask = np.zeros(self.param_count, dtype=bool)
        for name, (sl, _) in self.slices().items():
            if name.startswith(prefixes):
                mask[sl] = True
        return mask


def init_params(arch: Architecture, seed: int = 0) -> np.ndarray:
    """Scaled-normal weights, zero biases, zero value projections and zero skip."""
    rng = generator(seed, "init")
    blocks = {}
    for name, shape in arch.layout():
        if name.endswith(".b") or name in ("att0.v", "att1.v", "skip.w"):
            blocks[name] = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[:-1]))
            blocks[name] = rng.standard_normal(shape) / math.sqrt(fan_in)
    return arch.pack(blocks)


# ---------------------------------------------------------------- building blocks

def flatten_spatial(features: np.ndarray) -> np.ndarray:
    """``H x W x C`` map to ``(H * W) x C`` tokens in row-major order."""
    h, w, c = features.shape
    return features.reshape(h * w, c)


def unflatten_spatial(tokens: np.ndarray, height: int, width: int) -> np.ndarray:
    return tokens.reshape(height, width, tokens.shape[-1])


def _softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def attention_weights(q: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Row-stochastic ``softmax(q k^T / sqrt(d))`` over the key axis."""
    d = q.shape[-1]
    return _softmax(q @ np.swapaxes(k, -1, -2) / math.sqrt(d))


def attend(q: np.ndarray, k: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Scaled dot-product attention; the last two axes are tokens x width."""
    if q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2]:
        raise ShapeMismatchError(f"attention shapes do not line up: q{q.shape} k{k.shape} v{v.shape}")
    return attention_weights(q, k) @ v


@dataclass(frozen=True, slots=True, eq=False)
class CrossAttentionParams:
    """Projections ``W_Q``, ``W_K``, ``W_V`` of one injection site, each ``C x d``."""
    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray

    def __post_init__(self):
        shapes = set()
        for name in ("w_q", "w_k", "w_v"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.ndim != 2:
                raise ShapeMismatchError(f"{name} must be a matrix, got shape {arr.shape}")
            status = FiniteArrayValidationStrategy().validate(arr)
            if not status.ok:
                raise ParameterError(f"{name}: {status.details}")
            object.__setattr__(self, name, arr)
            shapes.add(arr.shape)
        if len(shapes) != 1:
            raise ShapeMismatchError(f"projection shapes differ: {sorted(shapes)}")

    @property
    def width(self) -> int:
        return self.w_q.shape[1]


def cross_attention(f_tokens: np.ndarray, l_tokens: np.ndarray, params: CrossAttentionParams) -> np.ndarray:
    """Condition tokens query the layer tokens; the result is added to ``l_tokens``.

    Raises:
        ShapeMismatchError: Token widths differ from the projections, or the layer
            token count is neither 1 nor the condition token count.
    """
    c = params.w_q.shape[0]
    if f_tokens.shape[-1] != c or l_tokens.shape[-1] != c:
        raise ShapeMismatchError(f"tokens of width {f_tokens.shape[-1]}/{l_tokens.shape[-1]} "
                                 f"do not fit projections of width {c}")
    if l_tokens.shape[-2] not in (1, f_tokens.shape[-2]):
        raise ShapeMismatchError("layer tokens must match the condition tokens in number, or be a single token")
    return l_tokens + attend(f_tokens @ params.w_q, l_tokens @ params.w_k, l_tokens @ params.w_v)


def time_embedding(t: np.ndarray, width: int) -> np.ndarray:
    """Sinusoidal embedding ``[sin(t w_j), cos(t w_j)]`` for each timestep in ``t``."""
    half = width // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / half)
    args = np.asarray(t, dtype=np.float64)[:, np.newaxis] * freqs[np.newaxis, :]
    return np.concatenate([np.sin(args), np.cos(args)], axis=1)


def _window(offset: int, count: int, stride: int) -> slice:
    return slice(offset, offset + stride * (count - 1) + 1, stride)


def _conv(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int) -> Tuple[np.ndarray, np.ndarray]:
    n, h, wd, _ = x.shape
    ho, wo = (h - 1) // stride + 1, (wd - 1) // stride + 1
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    out = np.broadcast_to(b, (n, ho, wo, w.shape[3])).copy()
    for dy in range(3):
        for dx in range(3):
            out += xp[:, _window(dy, ho, stride), _window(dx, wo, stride), :] @ w[dy, dx]
    return out, xp


def _conv_backward(grad: np.ndarray, xp: np.ndarray, w: np.ndarray,
                   stride: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    ho, wo = grad.shape[1:3]
    gw = np.zeros_like(w)
    gxp = np.zeros_like(xp)
    for dy in range(3):
        for dx in range(3):
            window = (slice(None), _window(dy, ho, stride), _window(dx, wo, stride), slice(None))
            gw[dy, dx] = np.tensordot(xp[window], grad, axes=([0, 1, 2], [0, 1, 2]))
            gxp[window] += grad @ w[dy, dx].T
    return gxp[:, 1:-1, 1:-1, :], gw, grad.sum(axis=(0, 1, 2))


def _attention_forward(f: np.ndarray, l: np.ndarray, wq, wk, wv):
    n, h, w, c = l.shape
    ft, lt = f.reshape(n, h * w, c), l.reshape(n, h * w, c)
    q, k, v = ft @ wq, lt @ wk, lt @ wv
    p = attention_weights(q, k)
    out = (p @ v).reshape(n, h, w, -1)
    return out, (ft, lt, q, k, v, p)


def _attention_backward(grad: np.ndarray, cache, wq, wk, wv):
    ft, lt, q, k, v, p = cache
    n, h, w, _ = grad.shape
    go = grad.reshape(n, h * w, -1)
    scale = 1.0 / math.sqrt(q.shape[-1])
    gv = np.swapaxes(p, 1, 2) @ go
    gp = go @ np.swapaxes(v, 1, 2)
    gs = p * (gp - np.sum(gp * p, axis=-1, keepdims=True)) * scale
    gq = gs @ k
    gk = np.swapaxes(gs, 1, 2) @ q
    axes = ([0, 1], [0, 1])
    gwq = np.tensordot(ft, gq, axes=axes)
    gwk = np.tensordot(lt, gk, axes=axes)
    gwv = np.tensordot(lt, gv, axes=axes)
    gf = (gq @ wq.T).reshape(n, h, w, -1)
    gl = (gk @ wk.T + gv @ wv.T).reshape(n, h, w, -1)
    return gf, gl, gwq, gwk, gwv


# ---------------------------------------------------------------- network

def _check_inputs(x_t: np.ndarray, condition: np.ndarray, illumination: np.ndarray) -> None:
    if x_t.ndim != 4 or x_t.shape[-1] != LATENT_CHANNELS:
        raise ShapeMismatchError(f"latent must be N x H x W x {LATENT_CHANNELS}, got {x_t.shape}")
    if condition.shape != x_t.shape:
        raise ShapeMismatchError(f"condition shape {condition.shape} differs from latent {x_t.shape}")
    if illumination.shape != x_t.shape[:3] + (1,):
        raise ShapeMismatchError(f"illumination shape {illumination.shape} does not match latent {x_t.shape}")
    h, w = x_t.shape[1:3]
    if h % 2 or w % 2:
        raise ShapeMismatchError(f"spatial size {h}x{w} is not divisible by 2")


def _encode(illumination: np.ndarray, p: Dict[str, np.ndarray], cache: Dict[str, object]) -> List[np.ndarray]:
    f0_pre, cache["enc0.xp"] = _conv(illumination, p["enc0.w"], p["enc0.b"], 1)
    f0 = np.tanh(f0_pre)
    f1_pre, cache["enc1.xp"] = _conv(f0, p["enc1.w"], p["enc1.b"], 2)
    f1 = np.tanh(f1_pre)
    cache["f0"], cache["f1"] = f0, f1
    return [f0, f1]


def illum_encoder(illumination: np.ndarray, theta: np.ndarray, arch: Architecture) -> List[np.ndarray]:
    """Feature pyramid ``[F_0, F_1]`` of an ``N x H x W x 1`` illumination batch.

    ``F_0`` keeps the input resolution with ``c0`` channels; ``F_1`` halves it
    with ``c1`` channels.

    Raises:
        ShapeMismatchError: Not a single-channel batch, or odd spatial size.
    """
    illumination = np.asarray(illumination, dtype=np.float64)
    if illumination.ndim != 4 or illumination.shape[-1] != 1:
        raise ShapeMismatchError(f"illumination must be N x H x W x 1, got {illumination.shape}")
    h, w = illumination.shape[1:3]
    if h % 2 or w % 2:
        raise ShapeMismatchError(f"spatial size {h}x{w} is not divisible by 2")
    return _encode(illumination, arch.unpack(theta), {})


def forward(theta: np.ndarray, arch: Architecture, x_t: np.ndarray, condition: np.ndarray,
            illumination: np.ndarray, t: np.ndarray):
    """Batched forward pass over ``N x H x W x C`` arrays.

    Returns:
        Tuple[np.ndarray, dict]: Predicted noise and the cache for :func:`backward`.
    """
    _check_inputs(x_t, condition, illumination)
    p = arch.unpack(theta)
    x = np.concatenate([x_t, condition], axis=-1)
    emb = time_embedding(np.asarray(t).reshape(-1), arch.temb)
    cache: Dict[str, object] = {"x": x, "emb": emb}

    if arch.inject_illumination:
        f0, f1 = _encode(illumination, p, cache)

    a0, cache["in.xp"] = _conv(x, p["in.w"], p["in.b"], 1)
    h0 = np.tanh(a0 + (emb @ p["time0.w"] + p["time0.b"])[:, None, None, :])
    h0a = h0
    if arch.inject_illumination:
        upd, cache["att0"] = _attention_forward(f0, h0, p["att0.q"], p["att0.k"], p["att0.v"])
        h0a = h0 + upd
    a1, cache["down.xp"] = _conv(h0a, p["down.w"], p["down.b"], 2)
    h1 = np.tanh(a1 + (emb @ p["time1.w"] + p["time1.b"])[:, None, None, :])
    h1a = h1
    if arch.inject_illumination:
        upd, cache["att1"] = _attention_forward(f1, h1, p["att1.q"], p["att1.k"], p["att1.v"])
        h1a = h1 + upd
    up = h1a.repeat(2, axis=1).repeat(2, axis=2)
    a2, cache["up.xp"] = _conv(up, p["up.w"], p["up.b"], 1)
    u0 = np.tanh(a2)
    u = u0 + h0a
    a3, cache["mid.xp"] = _conv(u, p["mid.w"], p["mid.b"], 1)
    u1 = np.tanh(a3)
    out, cache["out.xp"] = _conv(u1, p["out.w"], p["out.b"], 1)
    out = out + x @ p["skip.w"]
    cache.update(h0=h0, h1=h1, u0=u0, u1=u1)
    return out, cache


def backward(theta: np.ndarray, arch: Architecture, cache: Dict[str, object], grad_out: np.ndarray) -> np.ndarray:
    """Gradient of a scalar loss with respect to ``theta`` given ``dL/d(output)``."""
    p = arch.unpack(theta)
    g = {name: np.zeros(shape) for name, shape in arch.layout()}
    x, emb = cache["x"], cache["emb"]
    h0, h1, u0, u1 = cache["h0"], cache["h1"], cache["u0"], cache["u1"]

    g["skip.w"] = np.tensordot(x, grad_out, axes=([0, 1, 2], [0, 1, 2]))
    g_u1, g["out.w"], g["out.b"] = _conv_backward(grad_out, cache["out.xp"], p["out.w"], 1)
    g_a3 = g_u1 * (1.0 - u1 * u1)
    g_u, g["mid.w"], g["mid.b"] = _conv_backward(g_a3, cache["mid.xp"], p["mid.w"], 1)
    g_h0a = g_u.copy()
    g_a2 = g_u * (1.0 - u0 * u0)
    g_up, g["up.w"], g["up.b"] = _conv_backward(g_a2, cache["up.xp"], p["up.w"], 1)
    n, hh, ww, c1 = g_up.shape
    g_h1a = g_up.reshape(n, hh // 2, 2, ww // 2, 2, c1).sum(axis=(2, 4))

    g_h1 = g_h1a
    if arch.inject_illumination:
        g_f1, g_l1, g["att1.q"], g["att1.k"], g["att1.v"] = _attention_backward(
            g_h1a, cache["att1"], p["att1.q"], p["att1.k"], p["att1.v"])
        g_h1 = g_h1a + g_l1
    g_a1 = g_h1 * (1.0 - h1 * h1)
    g_t1 = g_a1.sum(axis=(1, 2))
    g["time1.w"], g["time1.b"] = emb.T @ g_t1, g_t1.sum(axis=0)
    g_from_down, g["down.w"], g["down.b"] = _conv_backward(g_a1, cache["down.xp"], p["down.w"], 2)
    g_h0a += g_from_down

    g_h0 = g_h0a
    if arch.inject_illumination:
        g_f0, g_l0, g["att0.q"], g["att0.k"], g["att0.v"] = _attention_backward(
            g_h0a, cache["att0"], p["att0.q"], p["att0.k"], p["att0.v"])
        g_h0 = g_h0a + g_l0
    g_a0 = g_h0 * (1.0 - h0 * h0)
    g_t0 = g_a0.sum(axis=(1, 2))
    g["time0.w"], g["time0.b"] = emb.T @ g_t0, g_t0.sum(axis=0)
    _, g["in.w"], g["in.b"] = _conv_backward(g_a0, cache["in.xp"], p["in.w"], 1)

    if arch.inject_illumination:
        f0, f1 = cache["f0"], cache["f1"]
        g_f1_pre = g_f1 * (1.0 - f1 * f1)
        g_f0_enc, g["enc1.w"], g["enc1.b"] = _conv_backward(g_f1_pre, cache["enc1.xp"], p["enc1.w"], 2)
        g_f0_pre = (g_f0 + g_f0_enc) * (1.0 - f0 * f0)
        _, g["enc0.w"], g["enc0.b"] = _conv_backward(g_f0_pre, cache["enc0.xp"], p["enc0.w"], 1)
    return arch.pack(g)


def denoise_predict(x_t: np.ndarray, condition: np.ndarray, illumination: np.ndarray, t: int,
                    theta: np.ndarray, arch: Architecture) -> np.ndarray:
    """Noise prediction for one ``H x W x C`` latent."""
    out, _ = forward(theta, arch, x_t[np.newaxis], condition[np.newaxis], illumination[np.newaxis],
                     np.array([t]))
    return out[0]


class TinyDenoiser:
    """A trained (or initial) parameter vector bound to its architecture.

    Instances satisfy the denoiser contract of :mod:`night_restore.diffcore`.
    """

    def __init__(self, theta: np.ndarray, arch: Architecture):
        self.arch = arch
        self.theta = np.array(theta, dtype=np.float64)
        arch.unpack(self.theta)

    @classmethod
    def initial(cls, arch: Architecture = Architecture(), seed: int = 0) -> "TinyDenoiser":
        return cls(init_params(arch, seed), arch)

    def __call__(self, x_t: np.ndarray, condition: np.ndarray, illumination: np.ndarray, t: int) -> np.ndarray:
        return denoise_predict(x_t, condition, illumination, t, self.theta, self.arch)


# ---------------------------------------------------------------- objective

@dataclass(frozen=True, slots=True, eq=False)
class TrainingBatch:
    """Stacked examples: clean ``x0``, conditioning, illumination, timesteps and noise."""
    x0: np.ndarray
    condition: np.ndarray
    illumination: np.ndarray
    t: np.ndarray
    eps: np.ndarray

    def __post_init__(self):
        n = self.x0.shape[0]
        if self.t.shape != (n,) or self.eps.shape != self.x0.shape:
            raise ShapeMismatchError("timesteps and noise must match the batch")
        _check_inputs(self.x0, self.condition, self.illumination)

    def __len__(self) -> int:
        return self.x0.shape[0]


def make_batch(triples: Sequence[Triple], sched: NoiseSchedule, rng: np.random.Generator) -> TrainingBatch:
    """Stack triples and draw one ``(t, eps)`` per example, ``t`` uniform on ``[1, T]``."""
    if not triples:
        raise ParameterError("training needs at least one example")
    x0 = np.stack([c.data for c, _, _ in triples])
    cond = np.stack([d.data for _, d, _ in triples])
    illum = np.stack([i.data for _, _, i in triples])
    t = rng.integers(1, sched.T + 1, size=len(triples))
    eps = rng.standard_normal(x0.shape)
    return TrainingBatch(x0, cond, illum, t, eps)


def _noised(batch: TrainingBatch, sched: NoiseSchedule) -> np.ndarray:
    ab = sched.alpha_bar[batch.t][:, None, None, None]
    return np.sqrt(ab) * batch.x0 + np.sqrt(1.0 - ab) * batch.eps


def batch_loss(theta: np.ndarray, batch: TrainingBatch, arch: Architecture, sched: NoiseSchedule) -> float:
    pred, _ = forward(theta, arch, _noised(batch, sched), batch.condition, batch.illumination, batch.t)
    return float(np.mean((batch.eps - pred) ** 2))


def loss_and_gradient(theta: np.ndarray, batch: TrainingBatch, arch: Architecture, sched: NoiseSchedule,
                      frozen: Optional[np.ndarray] = None) -> Tuple[float, np.ndarray]:
    """Mean squared noise error over the batch and its exact gradient.

    Args:
        frozen: Optional boolean mask; masked coordinates get a zero gradient.
    """
    pred, cache = forward(theta, arch, _noised(batch, sched), batch.condition, batch.illumination, batch.t)
    diff = pred - batch.eps
    loss = float(np.mean(diff ** 2))
    grad = backward(theta, arch, cache, 2.0 * diff / diff.size)
    if frozen is not None:
        grad[np.asarray(frozen, dtype=bool)] = 0.0
    return loss, grad


def loss_gradient(theta: np.ndarray, batch: TrainingBatch, arch: Architecture, sched: NoiseSchedule,
                  frozen: Optional[np.ndarray] = None) -> np.ndarray:
    return loss_and_gradient(theta, batch, arch, sched, frozen)[1]


def finite_difference_gradient(theta: np.ndarray, batch: TrainingBatch, arch: Architecture,
                               sched: NoiseSchedule, h: float = 1e-5) -> np.ndarray:
    """Central differences, one coordinate at a time; for small models only."""
    theta = np.array(theta, dtype=np.float64)
    grad = np.zeros_like(theta)
    for i in range(theta.size):
        old = theta[i]
        theta[i] = old + h
        up = batch_loss(theta, batch, arch, sched)
        theta[i] = old - h
        down = batch_loss(theta, batch, arch, sched)
        theta[i] = old
        grad[i] = (up - down) / (2.0 * h)
    return grad


def gradient_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-4) -> np.ndarray:
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)


# ---------------------------------------------------------------- training

@dataclass(frozen=True, slots=True)
class TrainingConfig:
    steps: int = 500
    learning_rate: float = 0.05
    seed: int = 0
    architecture: Architecture = Architecture()
    smoothing_window: int = 20
    divergence_factor: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "steps", PositiveInt.check(self.steps))
        object.__setattr__(self, "learning_rate", NonNegativeReal.check(self.learning_rate))
        object.__setattr__(self, "seed", Seed.check(self.seed))
        object.__setattr__(self, "smoothing_window", PositiveInt.check(self.smoothing_window))
        object.__setattr__(self, "divergence_factor", PositiveReal.check(self.divergence_factor))
        if not isinstance(self.architecture, Architecture):
            raise ParameterError("architecture must be an Architecture")


@dataclass(frozen=True, slots=True, eq=False)
class TrainingResult:
    theta: np.ndarray
    trace: Tuple[float, ...]
    architecture: Architecture
    smoothing_window: int = 20

    @property
    def smoothed(self) -> np.ndarray:
        return smooth_trace(self.trace, self.smoothing_window)

    @property
    def denoiser(self) -> TinyDenoiser:
        return TinyDenoiser(self.theta, self.architecture)


def smooth_trace(trace: Sequence[float], window: int = 20) -> np.ndarray:
    """Trailing mean over up to ``window`` entries; the first entry is unchanged."""
    values = np.asarray(trace, dtype=np.float64)
    sums = np.cumsum(np.concatenate(([0.0], values)))
    idx = np.arange(1, values.size + 1)
    start = np.maximum(idx - window, 0)
    return (sums[idx] - sums[start]) / (idx - start)


def train_toy(dataset: Sequence[Triple], config: TrainingConfig = TrainingConfig(),
              sched: Optional[NoiseSchedule] = None) -> TrainingResult:
    """Full-batch gradient descent with a fixed step on fixed ``(t, eps)`` draws.

    The trace holds the loss evaluated before each update.

    Raises:
        TrainingDivergedError: Loss above ``divergence_factor`` times the initial
            loss, or not finite; the error carries the trace so far.
    """
    sched = sched or build_schedule()
    arch = config.architecture
    if len(dataset) < 64:
        logger.warning("training on %d examples; at least 64 are expected", len(dataset))
    batch = make_batch(dataset, sched, generator(config.seed, "examples"))
    theta = init_params(arch, config.seed)
    trace: List[float] = []
    for step in range(config.steps):
        loss, grad = loss_and_gradient(theta, batch, arch, sched)
        trace.append(loss)
        if not math.isfinite(loss) or loss > config.divergence_factor * trace[0]:
            raise TrainingDivergedError(f"loss {loss:.6g} at step {step} exceeds "
                                        f"{config.divergence_factor}x the initial {trace[0]:.6g}", trace)
        if config.learning_rate:
            theta = theta - config.learning_rate * grad
        if step % 50 == 0:
            logger.info("step %d loss %.6f", step, loss)
    logger.info("trained %d steps: loss %.6f -> %.6f", config.steps, trace[0], trace[-1])
    return TrainingResult(theta, tuple(trace), arch, config.smoothing_window)


@dataclass(frozen=True, slots=True, eq=False)
class AblationResult:
    guided: TrainingResult
    unguided: TrainingResult

    @property
    def final_losses(self) -> Tuple[float, float]:
        return self.guided.trace[-1], self.unguided.trace[-1]


def illumination_ablation(dataset: Sequence[Triple], config: TrainingConfig = TrainingConfig(),
                          sched: Optional[NoiseSchedule] = None) -> AblationResult:
    """Train the same architecture, seed and steps with and without illumination injection."""
    guided_arch = replace(config.architecture, inject_illumination=True)
    plain_arch = replace(config.architecture, inject_illumination=False)
    guided = train_toy(dataset, replace(config, architecture=guided_arch), sched)
    unguided = train_toy(dataset, replace(config, architecture=plain_arch), sched)
    return AblationResult(guided, unguided)


# ---------------------------------------------------------------- persistence

_HEADER = struct.Struct("<4sHI")
_COUNT = struct.Struct("<Q")


def save_model(path: Union[str, Path], arch: Architecture, theta: np.ndarray) -> None:
    theta = np.asarray(theta, dtype="<f8")
    arch.unpack(theta)
    desc = json.dumps(arch.descriptor(), sort_keys=True).encode("utf-8")
    blob = _HEADER.pack(MODEL_MAGIC, MODEL_FORMAT_VERSION, len(desc)) + desc + _COUNT.pack(theta.size)
    try:
        Path(path).write_bytes(blob + theta.tobytes())
    except OSError as e:
        raise ImageWriteError(f"cannot write model {path}: {e}") from e


def load_model(path: Union[str, Path]) -> TinyDenoiser:
    """Read a model file back.

    Raises:
        ArchitectureMismatchError: Wrong magic, unknown version, bad descriptor or
            a parameter count that does not fit the descriptor.
    """
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise ArchitectureMismatchError(f"{path}: truncated model header")
    magic, version, desc_len = _HEADER.unpack_from(blob)
    if magic != MODEL_MAGIC:
        raise ArchitectureMismatchError(f"{path}: not a model file (magic {magic!r})")
    if version != MODEL_FORMAT_VERSION:
        raise ArchitectureMismatchError(f"{path}: unsupported model version {version}")
    offset = _HEADER.size
    try:
        desc = json.loads(blob[offset:offset + desc_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ArchitectureMismatchError(f"{path}: unreadable descriptor ({e})") from e
    arch = Architecture.from_descriptor(desc)
    offset += desc_len
    if len(blob) < offset + _COUNT.size:
        raise ArchitectureMismatchError(f"{path}: truncated parameter count")
    (count,) = _COUNT.unpack_from(blob, offset)
    offset += _COUNT.size
    if count != arch.param_count:
        raise ArchitectureMismatchError(f"{path}: {count} parameters declared, descriptor needs {arch.param_count}")
    if len(blob) - offset != 8 * count:
        raise ArchitectureMismatchError(f"{path}: expected {8 * count} parameter bytes, found {len(blob) - offset}")
    theta = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).astype(np.float64)
    return TinyDenoiser(theta, arch)
