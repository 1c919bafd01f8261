"""Dense array helpers: smoothing kernels, reflect-padded convolution,
cosine similarity, and a counter-based seeded RNG.

Grids are plain 2-D float64 numpy arrays (row-major); vectors are 1-D
float64 arrays. All core arithmetic stays in 64-bit floats.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

__all__ = [
    "SeededRng",
    "gaussian_kernel",
    "gaussian_kernel_2d",
    "default_kernel_radius",
    "is_delta_kernel",
    "convolve2d_reflect",
    "convolve1d_reflect",
    "cosine_similarity",
    "validate_grid",
    "validate_kernel",
]

KERNEL_SUM_TOL = 1e-12


class SeededRng:
    """Deterministic random stream backed by the Philox counter-based
    bit generator.

    Philox is a fixed, documented algorithm whose output depends only on
    (key, counter), so identical seeds produce identical streams across
    runs and platforms. Instances are single-owner: do not share one
    stream between concurrent consumers.
    """

    def __init__(self, seed: int, *path: int):
        self.seed = int(seed)
        self.path = tuple(int(p) for p in path)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
        self._gen = np.random.Generator(np.random.Philox(ss))

    def child(self, *path: int) -> "SeededRng":
        """Independent stream derived from (seed, *existing path, *path)."""
        return SeededRng(self.seed, *self.path, *path)

    def standard_normal(self, shape) -> np.ndarray:
        return self._gen.standard_normal(shape, dtype=np.float64)

    def uniform(self, low: float, high: float, shape=None) -> np.ndarray:
        return self._gen.uniform(low, high, shape)

    def integers(self, low: int, high: int, shape=None) -> np.ndarray:
        return self._gen.integers(low, high, shape)

    def shuffle(self, x: np.ndarray) -> None:
        self._gen.shuffle(x)


def sample_standard_normal(rng: SeededRng, n: int) -> np.ndarray:
    """n i.i.d. standard-normal draws; deterministic given the stream state."""
    if n < 1:
        raise ValueError(f"sample count must be >= 1, got {n}")
    return rng.standard_normal(int(n))


def gaussian_kernel(sigma: float, radius: int) -> np.ndarray:
    """Normalized 1-D Gaussian weights of length 2*radius+1.

    weights[i] is proportional to exp(-(i-radius)^2 / (2 sigma^2)) and the
    whole kernel sums to 1.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if radius < 1:
        raise ValueError(f"radius must be >= 1, got {radius}")
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    weights = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    total = weights.sum()
    if total == 0.0:  # extreme underflow: everything but the center vanished
        weights[:] = 0.0
        weights[radius] = 1.0
        return weights
    return weights / total

def gaussian_kernel_2d(sigma: float, radius: int) -> np.ndarray:
    """Separable 2-D Gaussian kernel (outer square of the 1-D weights)."""
    k = gaussian_kernel(sigma, radius)
    return np.outer(k, k)


def default_kernel_radius(sigma: float, limit: int) -> int:
    """ceil(3*sigma) capped at `limit`; captures >99.7% of the mass."""
    return max(1, min(int(math.ceil(3.0 * sigma)), int(limit)))


def is_delta_kernel(kernel: np.ndarray) -> bool:
    """True when the kernel's center weight is exactly 1 (identity blur)."""
    center = tuple(s // 2 for s in kernel.shape)
    return kernel[center] == 1.0


def validate_kernel(kernel: np.ndarray) -> None:
    if np.any(kernel < 0):
        raise ValueError("kernel weights must be non-negative")
    if abs(float(kernel.sum()) - 1.0) > KERNEL_SUM_TOL:
        raise ValueError(f"kernel must sum to 1, got {kernel.sum()!r}")


def validate_grid(grid: np.ndarray) -> np.ndarray:
    arr = np.asarray(grid, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"grid must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("grid entries must be finite")
    return arr


def convolve2d_reflect(grid: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """2-D convolution with reflect padding.

    Reflect padding keeps constant fields fixed points of any normalized
    kernel, which is what makes blur mass-preserving on attention rows.
    """
    grid = validate_grid(grid)
    radius = kernel.shape[0] // 2
    if radius >= min(grid.shape):
        raise ValueError(
            f"kernel radius {radius} must be smaller than grid min side {min(grid.shape)}"
        )
    if is_delta_kernel(kernel):
        return grid.copy()
    return ndimage.convolve(grid, kernel, mode="reflect")


def convolve1d_reflect(vec: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """1-D convolution with reflect padding (same conventions as the 2-D case)."""
    vec = np.asarray(vec, dtype=np.float64)
    radius = kernel.shape[0] // 2
    if radius >= vec.shape[-1]:
        raise ValueError(
            f"kernel radius {radius} must be smaller than vector length {vec.shape[-1]}"
        )
    if is_delta_kernel(kernel):
        return vec.copy()
    return ndimage.convolve1d(vec, kernel, mode="reflect", axis=-1)


def cosine_similarity(a: np.ndarray, b: np.ndarray, with_flag: bool = False):
    """Cosine of the angle between two flat vectors, clamped to [-1, 1].

    A zero-norm input is degenerate: the result is defined as 0.0 and, with
    `with_flag=True`, reported via the second return value.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return (0.0, True) if with_flag else 0.0
    value = float(np.dot(a, b) / (na * nb))
    value = max(-1.0, min(1.0, value))
    return (value, False) if with_flag else value
