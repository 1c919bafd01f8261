"""Noise schedules and the deterministic DDIM step algebra.

Indexing convention: alpha[0] belongs to the (nearly) clean sample and
alpha[T] to the noisiest latent, so alpha is strictly decreasing in t.
Only deterministic DDIM (eta = 0) is implemented.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "NoiseSchedule",
    "LatentState",
    "make_schedule",
    "a_coef",
    "add_noise",
    "ddim_sample_step",
    "ddim_invert_step",
    "invert_trajectory",
    "sample_trajectory",
]

BETA_MIN = 1e-4
BETA_MAX = 0.02
BETA_CLIP = 0.999
ALPHA_FLOOR = 1e-9
COSINE_OFFSET = 0.008


@dataclass(frozen=True)
class NoiseSchedule:
    """Cumulative signal coefficients alpha_0..alpha_T of a diffusion process."""

    kind: str
    T: int
    alpha: np.ndarray = field(repr=False)

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=np.float64)
        if alpha.shape != (self.T + 1,):
            raise ValueError(f"alpha must have length T+1={self.T + 1}, got {alpha.shape}")
        if not (0.999 < alpha[0] <= 1.0):
            raise ValueError(f"alpha_0 must lie in (0.999, 1], got {alpha[0]}")
        if not (0.0 < alpha[-1] < 0.05):
            raise ValueError(f"alpha_T must lie in (0, 0.05), got {alpha[-1]}")
        if np.any(np.diff(alpha) >= 0.0):
            raise ValueError("alpha must be strictly decreasing in t")
        object.__setattr__(self, "alpha", alpha)

    def check_t(self, t: int) -> int:
        t = int(t)
        if not 0 <= t <= self.T:
            raise ValueError(f"timestep {t} outside [0, {self.T}]")
        return t


@dataclass(frozen=True)
class LatentState:
    """A sample (flat vector or 2-D grid) tagged with its timestep index."""

    value: np.ndarray
    t: int


def make_schedule(kind: str, T: int) -> NoiseSchedule:
    """Build a noise schedule of the given kind over T discrete steps.

    linear-beta: per-step beta_t linear from 1e-4 to 0.02, rescaled by
    1000/T so the terminal alpha stays roughly T-independent, clipped to
    keep every beta in (0, 1); alpha_t is the running product of (1-beta).
    cosine: squared-cosine cumulative alphas, floored away from zero.
    """
    T = int(T)
    if T < 2:
        raise ValueError(f"schedule needs T >= 2, got {T}")
    if kind == "linear-beta":
        i = np.arange(1, T + 1, dtype=np.float64)
        beta = (BETA_MIN + (i - 1.0) / (T - 1.0) * (BETA_MAX - BETA_MIN)) * (1000.0 / T)
        beta = np.clip(beta, 1e-8, BETA_CLIP)
        alpha = np.concatenate([[1.0], np.cumprod(1.0 - beta)])
    elif kind == "cosine":
        t = np.arange(0, T + 1, dtype=np.float64)
        f = np.cos((t / T + COSINE_OFFSET) / (1.0 + COSINE_OFFSET) * np.pi / 2.0) ** 2
        alpha = np.clip(f / f[0], ALPHA_FLOOR, 1.0)
        alpha[0] = 1.0
    else:
        raise ValueError(f"unknown schedule kind {kind!r}")
    return NoiseSchedule(kind=kind, T=T, alpha=alpha)


def a_coef(sched: NoiseSchedule, t: int) -> float:
    """sqrt(1/alpha_t - 1), the noise-to-signal coefficient of the DDIM steps."""
    t = sched.check_t(t)
    return float(np.sqrt(1.0 / sched.alpha[t] - 1.0))


def add_noise(z0: np.ndarray, eps: np.ndarray, sched: NoiseSchedule, t: int) -> LatentState:
    """Forward marginal z_t = sqrt(alpha_t) z_0 + sqrt(1 - alpha_t) eps."""
    z0 = np.asarray(z0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if z0.shape != eps.shape:
        raise ValueError(f"shape mismatch: z0 {z0.shape} vs eps {eps.shape}")
    t = sched.check_t(t)
    a = sched.alpha[t]
    return LatentState(np.sqrt(a) * z0 + np.sqrt(1.0 - a) * eps, t)


def ddim_sample_step(z: LatentState, eps_hat: np.ndarray, sched: NoiseSchedule) -> LatentState:
    """One deterministic denoising step from t to t-1.

    z_{t-1} = sqrt(alpha_{t-1}/alpha_t) z_t
              + sqrt(alpha_{t-1}) (A_{t-1} - A_t) eps_hat
    """
    t = sched.check_t(z.t)
    if t < 1:
        raise ValueError("cannot sample below t=0")
    a_prev, a_cur = sched.alpha[t - 1], sched.alpha[t]
    scale = np.sqrt(a_prev / a_cur)
    drift = np.sqrt(a_prev) * (a_coef(sched, t - 1) - a_coef(sched, t))
    return LatentState(scale * z.value + drift * np.asarray(eps_hat, dtype=np.float64), t - 1)


def ddim_invert_step(z: LatentState, eps_hat: np.ndarray, sched: NoiseSchedule) -> LatentState:
    """One inversion step from t to t+1 (same affine map run upward in noise)."""
    t = sched.check_t(z.t)
    if t > sched.T - 1:
        raise ValueError(f"cannot invert above t=T={sched.T}")
    a_next, a_cur = sched.alpha[t + 1], sched.alpha[t]
    scale = np.sqrt(a_next / a_cur)
    drift = np.sqrt(a_next) * (a_coef(sched, t + 1) - a_coef(sched, t))
    return LatentState(scale * z.value + drift * np.asarray(eps_hat, dtype=np.float64), t + 1)


def invert_trajectory(z0: np.ndarray, denoiser, source_condition, sched: NoiseSchedule) -> list:
    """Encode z_0 upward to z_T, re-predicting eps at every latent.

    `denoiser(value, t, condition)` must return an eps prediction of the
    same shape. Inversion is unguided: only the source condition is used.
    Returns the T+1 states z_0..z_T in order of increasing t.
    """
    state = LatentState(np.asarray(z0, dtype=np.float64), 0)
    trajectory = [state]
    for t in range(sched.T):
        eps_hat = denoiser(state.value, t, source_condition)
        state = ddim_invert_step(state, eps_hat, sched)
        trajectory.append(state)
    return trajectory


def sample_trajectory(zT: np.ndarray, denoiser, condition, sched: NoiseSchedule) -> list:
    """Plain unguided DDIM sampling from z_T down to z_0 (round-trip helper)."""
    state = LatentState(np.asarray(zT, dtype=np.float64), sched.T)
    trajectory = [state]
    for t in range(sched.T, 0, -1):
        eps_hat = denoiser(state.value, t, condition)
        state = ddim_sample_step(state, eps_hat, sched)
        trajectory.append(state)
    return trajectory
