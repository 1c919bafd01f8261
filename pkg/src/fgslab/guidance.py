"""Guidance algebra: classifier-free guidance, faithfulness guidance,
their combination, and log-curve scheduling of the two scales.

Scheduling works on normalized denoising progress s in [0, 1]: s = 0 at
the noisiest step (t = T) and s = 1 at the final step (t = 1), i.e.
s = (T - t) / (T - 1). One scale follows a decreasing log curve, the
other an increasing one; which scale takes which curve depends on what
the transferred information carries (layout vs detail).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .transfer import InjectionPolicy, PerturbKind

__all__ = [
    "GuidanceConfig",
    "ScheduledScales",
    "cfg_combine",
    "fg_combine",
    "combined",
    "schedule_scales",
    "assign_roles",
]


def _check_shapes(*values) -> None:
    shapes = {np.asarray(v).shape for v in values}
    if len(shapes) != 1:
        raise ValueError(f"shape mismatch between guidance terms: {shapes}")


def cfg_combine(eps_c: np.ndarray, eps_u: np.ndarray, w: float) -> np.ndarray:
    """eps_c + w (eps_c - eps_u): extrapolate away from the unconditional output."""
    _check_shapes(eps_c, eps_u)
    eps_c = np.asarray(eps_c, dtype=np.float64)
    if w == 0.0:
        return eps_c.copy()
    return eps_c + w * (eps_c - np.asarray(eps_u, dtype=np.float64))


def fg_combine(eps_ci: np.ndarray, eps_cip: np.ndarray, w: float) -> np.ndarray:
    """Same extrapolation with the perturbed-transfer output as the baseline."""
    return cfg_combine(eps_ci, eps_cip, w)


def combined(eps_ci, eps_ui, eps_cip, w_cfg: float, w_fg: float) -> np.ndarray:
    """Editing-path output with both guidance terms applied at once.

    eps_ci + w_cfg (eps_ci - eps_ui) + w_fg (eps_ci - eps_cip). Zero-weight
    terms are skipped so the reductions to the single-term forms are
    bit-exact.
    """
    eps_ci = np.asarray(eps_ci, dtype=np.float64)
    out = eps_ci.copy()
    if w_cfg != 0.0:
        _check_shapes(eps_ci, eps_ui)
        out = out + w_cfg * (eps_ci - np.asarray(eps_ui, dtype=np.float64))
    if w_fg != 0.0:
        _check_shapes(eps_ci, eps_cip)
        out = out + w_fg * (eps_ci - np.asarray(eps_cip, dtype=np.float64))
    return out


def schedule_scales(s: float, k: float, w_d: float, w_i: float) -> tuple:
    """Log-curve pair at progress s: decreasing scale first, increasing second.

    w_d log(1 + k(1-s))/log(1+k) falls from w_d to 0 as s runs 0 -> 1;
    w_i log(1 + k s)/log(1+k) rises from 0 to w_i. Larger k makes both
    curves change more sharply near their high end.
    """
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"progress s must lie in [0, 1], got {s}")
    if k <= 0.0:
        raise ValueError(f"k must be positive, got {k}")
    denom = math.log1p(k)
    return (
        w_d * math.log1p(k * (1.0 - s)) / denom,
        w_i * math.log1p(k * s) / denom,
    )


@dataclass(frozen=True)
class ScheduledScales:
    """Per-step guidance scales for the editing loop, indexed by timestep."""

    t: np.ndarray = field(repr=False)  # descending T..1
    w_cfg: np.ndarray = field(repr=False)
    w_fg: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not (len(self.t) == len(self.w_cfg) == len(self.w_fg)):
            raise ValueError("scale arrays must have equal length")
        if np.any(self.w_cfg < 0) or np.any(self.w_fg < 0):
            raise ValueError("scheduled scales must be >= 0")

    def at(self, t: int) -> tuple:
        idx = np.nonzero(self.t == t)[0]
        if len(idx) != 1:
            raise KeyError(f"no scheduled scales for timestep {t}")
        i = int(idx[0])
        return float(self.w_cfg[i]), float(self.w_fg[i])


def progress(t: int, T: int) -> float:
    """Normalized denoising progress: 0 at t=T, 1 at t=1."""
    if T < 2:
        return 1.0
    return (T - t) / (T - 1.0)


def assign_roles(tag: str, w_cfg_base: float, w_fg_base: float, k: float, steps: int,
                 schedule_cfg: bool = True, schedule_fg: bool = True) -> ScheduledScales:
    """Build the per-step scale pair with curve roles chosen by transfer tag.

    layout payloads want their amplification early, so the faithfulness
    scale takes the decreasing curve and the text-conditioning scale the
    increasing one; detail payloads reverse the assignment. The schedule_*
    switches hold a scale constant at its base value instead.
    """
    if tag not in ("layout", "detail"):
        raise ValueError(f"unknown transfer tag {tag!r}")
    ts = np.arange(steps, 0, -1, dtype=np.int64)
    w_cfg = np.empty(len(ts))
    w_fg = np.empty(len(ts))
    for i, t in enumerate(ts):
        w_dec_cfg, w_inc_cfg = schedule_scales(progress(int(t), steps), k, w_cfg_base, w_cfg_base)
        w_dec_fg, w_inc_fg = schedule_scales(progress(int(t), steps), k, w_fg_base, w_fg_base)
        if tag == "layout":
            w_fg[i] = w_dec_fg
            w_cfg[i] = w_inc_cfg
        else:
            w_fg[i] = w_inc_fg
            w_cfg[i] = w_dec_cfg
    if not schedule_cfg:
        w_cfg[:] = w_cfg_base
    if not schedule_fg:
        w_fg[:] = w_fg_base
    return ScheduledScales(t=ts, w_cfg=w_cfg, w_fg=w_fg)


@dataclass(frozen=True)
class GuidanceConfig:
    """Editing-path guidance settings.

    w_cfg / w_fg are the base scales; k sets the sharpness of the log
    scheduling curves; tag picks the curve roles; perturb defines how the
    transferred payload is degraded; tau is the injection-window fraction.
    """

    w_cfg: float = 7.5
    w_fg: float = 10.0
    k: float = 100.0
    tag: str = "layout"
    perturb: PerturbKind = PerturbKind.blur(5.0)
    tau: float = 0.5
    schedule_cfg: bool = True
    schedule_fg: bool = True

    def __post_init__(self):
        if self.w_cfg < 0 or self.w_fg < 0:
            raise ValueError("guidance scales must be >= 0")
        if self.k <= 0:
            raise ValueError("scheduling parameter k must be positive")
        if self.tag not in ("layout", "detail"):
            raise ValueError(f"unknown transfer tag {self.tag!r}")

    @property
    def policy(self) -> InjectionPolicy:
        return InjectionPolicy(self.tau)

    def with_(self, **kwargs) -> "GuidanceConfig":
        return replace(self, **kwargs)

    def scales_for(self, steps: int) -> ScheduledScales:
        return assign_roles(
            self.tag, self.w_cfg, self.w_fg, self.k, steps,
            schedule_cfg=self.schedule_cfg, schedule_fg=self.schedule_fg,
        )
