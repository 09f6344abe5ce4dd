"""Smooth procedural fields for pseudo-depth and exposure variation."""
import numpy as np


def _fade(t: np.ndarray) -> np.ndarray:
    """Quintic fade 6t^5 - 15t^4 + 10t^3."""
    return t * t * t * (t * (t * 6 - 15) + 10)


def value_noise(rng: np.random.Generator, height: int, width: int, cell: float) -> np.ndarray:
    """Lattice value noise with smooth interpolation.

    Args:
        rng: Source of the lattice values.
        height: Output height in pixels.
        width: Output width in pixels.
        cell: Lattice spacing in pixels; larger is smoother.

    Returns:
        np.ndarray: ``(height, width)`` array in [0, 1].
    """
    cell = max(float(cell), 1.0)
    gh = int(np.ceil(height / cell)) + 2
    gw = int(np.ceil(width / cell)) + 2
    grid = rng.random((gh, gw))

    ys = np.arange(height, dtype=np.float64) / cell
    xs = np.arange(width, dtype=np.float64) / cell
    yi = np.floor(ys).astype(np.intp)
    xi = np.floor(xs).astype(np.intp)
    fy = _fade(ys - yi)[:, np.newaxis]
    fx = _fade(xs - xi)[np.newaxis, :]

    yy, xx = np.meshgrid(yi, xi, indexing="ij")
    v00 = grid[yy, xx]
    v01 = grid[yy, xx + 1]
    v10 = grid[yy + 1, xx]
    v11 = grid[yy + 1, xx + 1]
    top = v00 + fx * (v01 - v00)
    bottom = v10 + fx * (v11 - v10)
    return top + fy * (bottom - top)


def fbm(rng: np.random.Generator, height: int, width: int, octaves: int = 4,
        base_cell: float = 32.0, persistence: float = 0.5, lacunarity: float = 2.0) -> np.ndarray:
    """Layered value noise normalised by the total amplitude, so the result stays in [0, 1]."""
    out = np.zeros((height, width), dtype=np.float64)
    amplitude, total, cell = 1.0, 0.0, float(base_cell)
    for _ in range(octaves):
        out += amplitude * value_noise(rng, height, width, cell)
        total += amplitude
        amplitude *= persistence
        cell /= lacunarity
    return out / total


def zero_mean_field(rng: np.random.Generator, height: int, width: int, base_cell: float = 16.0) -> np.ndarray:
    """fbm re-centred to zero mean and scaled so max |value| is 1 (all zeros if flat)."""
    field = fbm(rng, height, width, base_cell=base_cell)
    field -= field.mean()
    peak = float(np.abs(field).max())
    if peak == 0.0:
        return np.zeros_like(field)
    return field / peak
