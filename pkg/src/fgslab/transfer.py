"""Capture, perturbation, and injection policy for transferred information.

The reconstruction path records one payload per denoising step: either a
row-stochastic attention matrix (learned denoiser) or a responsibility
vector over mixture components (analytic denoiser). The editing path
re-injects these payloads, optionally perturbed, through a window
controlled by the fraction tau.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import arrays

__all__ = [
    "PerturbKind",
    "InjectionPolicy",
    "TransferPacket",
    "should_inject",
    "perturb",
]

ROW_SUM_TOL = 1e-9


@dataclass(frozen=True)
class PerturbKind:
    """How transferred payloads are degraded to fake an unconditional output.

    blur: Gaussian blur (per-row over the key grid for attention matrices,
    over the component axis for responsibility vectors), renormalized.
    noise: additive Gaussian noise, clamped at zero, renormalized.
    identity: attention becomes the identity matrix (every query attends
    only to itself); a responsibility vector becomes uniform, its
    maximum-entropy analog.
    """

    kind: str
    sigma: float = 5.0
    scale: float = 0.1

    def __post_init__(self):
        if self.kind not in ("blur", "noise", "identity"):
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        if self.kind == "blur" and self.sigma <= 0:
            raise ValueError("blur sigma must be positive")
        if self.kind == "noise" and self.scale <= 0:
            raise ValueError("noise scale must be positive")

    @classmethod
    def blur(cls, sigma: float = 5.0) -> "PerturbKind":
        return cls("blur", sigma=sigma)

    @classmethod
    def noise(cls, scale: float = 0.1) -> "PerturbKind":
        return cls("noise", scale=scale)

    @classmethod
    def identity(cls) -> "PerturbKind":
        return cls("identity")


@dataclass(frozen=True)
class InjectionPolicy:
    """Injection window: payloads are injected while t > (1 - tau) * T.

    tau is the fraction of denoising steps, counted from the noisiest one,
    that receive transferred information; tau=1 injects at every step,
    tau=0 never injects. Larger tau transfers more.
    """

    tau: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must lie in [0, 1], got {self.tau}")


def should_inject(t: int, T: int, policy: InjectionPolicy) -> bool:
    if not 0 <= t <= T:
        raise ValueError(f"timestep {t} outside [0, {T}]")
    return t > (1.0 - policy.tau) * T


@dataclass
class TransferPacket:
    """Per-timestep payloads recorded on the reconstruction path.

    tag marks what the payload carries ("layout" vs "detail") and drives
    the scheduling role assignment. support lists the component indices a
    responsibility payload was computed over (None for attention payloads).
    """

    tag: str = "layout"
    support: tuple | None = None
    payloads: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.tag not in ("layout", "detail"):
            raise ValueError(f"unknown transfer tag {self.tag!r}")

    def record(self, t: int, payload: np.ndarray) -> None:
        if t in self.payloads:
            raise ValueError(f"duplicate payload for timestep {t}")
        validate_normalized(payload)
        self.payloads[int(t)] = payload

    def get(self, t: int) -> np.ndarray:
        return self.payloads[int(t)]

    def timesteps(self) -> list:
        return sorted(self.payloads)

    def __len__(self) -> int:
        return len(self.payloads)


def validate_normalized(payload: np.ndarray) -> None:
    """Rows of a matrix payload (or the whole vector) must sum to 1, entries >= 0."""
    payload = np.asarray(payload)
    if payload.ndim not in (1, 2):
        raise ValueError(f"payload must be 1-D or 2-D, got shape {payload.shape}")
    if np.any(payload < -ROW_SUM_TOL):
        raise ValueError("payload entries must be non-negative")
    sums = payload.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > ROW_SUM_TOL):
        raise ValueError("payload rows must sum to 1")


def _renormalize(arr: np.ndarray) -> np.ndarray:
    """Clamp negatives to zero and rescale rows to sum 1; all-zero rows go uniform."""
    arr = np.maximum(arr, 0.0)
    sums = arr.sum(axis=-1, keepdims=True)
    n = arr.shape[-1]
    out = np.where(sums > 0.0, arr / np.where(sums > 0.0, sums, 1.0), 1.0 / n)
    return out


def perturb(payload: np.ndarray, kind: PerturbKind, rng: arrays.SeededRng | None = None,
            key_shape: tuple | None = None) -> np.ndarray:
    """Degrade a transfer payload; the output stays normalized like the input.

    Attention matrices are blurred per row over the key grid (each row is
    reshaped to key_shape, convolved with reflect padding, renormalized);
    responsibility vectors are blurred along the component axis. A blur
    narrow enough to underflow to a delta kernel returns the payload
    unchanged bit-exactly.
    """
    payload = np.asarray(payload, dtype=np.float64)
    validate_normalized(payload)
    if kind.kind == "identity":
        if payload.ndim == 2:
            return np.eye(payload.shape[0], dtype=np.float64)
        return np.full(payload.shape, 1.0 / payload.shape[0])
    if kind.kind == "noise":
        if rng is None:
            raise ValueError("noise perturbation needs an rng")
        return _renormalize(payload + kind.scale * rng.standard_normal(payload.shape))
    # blur
    if payload.ndim == 1:
        radius = arrays.default_kernel_radius(kind.sigma, payload.shape[0] - 1)
        kernel = arrays.gaussian_kernel(kind.sigma, radius)
        if arrays.is_delta_kernel(kernel):
            return payload.copy()
        return _renormalize(arrays.convolve1d_reflect(payload, kernel))
    n = payload.shape[1]
    if key_shape is None:
        side = int(math.isqrt(n))
        if side * side != n:
            raise ValueError(f"cannot infer a square key grid from {n} keys; pass key_shape")
        key_shape = (side, side)
    radius = arrays.default_kernel_radius(kind.sigma, min(key_shape) - 1)
    kernel2 = arrays.gaussian_kernel_2d(kind.sigma, radius)
    if arrays.is_delta_kernel(kernel2):
        return payload.copy()
    rows = payload.reshape(payload.shape[0], *key_shape)
    from scipy import ndimage

    blurred = ndimage.convolve(rows, kernel2[None, :, :], mode="reflect")
    return _renormalize(blurred.reshape(payload.shape))
