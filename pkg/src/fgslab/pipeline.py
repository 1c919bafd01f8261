"""Dual-path editor: inversion, reconstruction path with capture, editing
path with injection, perturbation, and scheduled guidance.

Both paths start from the same inverted latent. Each reconstruction step
records its transfer payload (attention matrix or responsibility vector);
inside the injection window the editing path replaces its own internals
with that payload, evaluates the conditional / unconditional / perturbed
noise predictions, and combines them with the scheduled guidance scales
before the DDIM update.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .arrays import SeededRng
from .denoiser import DenoiserParams, forward as nn_forward
from .diffusion import LatentState, NoiseSchedule, ddim_sample_step, invert_trajectory
from .guidance import GuidanceConfig, cfg_combine, combined
from .mixture import MixtureModel, normalize_condition
from .transfer import PerturbKind, TransferPacket, perturb, should_inject

__all__ = [
    "AnalyticDenoiser",
    "LearnedDenoiser",
    "EditRequest",
    "EditResult",
    "run_fgs",
    "run_baseline",
    "reconstruct_only",
    "transport_responsibilities",
]

PERTURB_STREAM = 7001


def transport_responsibilities(vec: np.ndarray, mapping, retention: float) -> np.ndarray:
    """Carry a recorded responsibility vector across a component
    correspondence.

    mapping pairs source components with their replacements (components
    outside the mapping, e.g. ones shared by both conditions, keep their
    recorded mass). A `retention` fraction of each mapped component's mass
    stays on the source component: this is the source content the
    transferred information inherently drags along, the counterpart of an
    injected attention layout still looking like the source image. The
    output sums to 1 like the input.
    """
    if not 0.0 <= retention <= 1.0:
        raise ValueError("retention must lie in [0, 1]")
    out = np.array(vec, dtype=np.float64, copy=True)
    for src, dst in mapping:
        moved = (1.0 - retention) * vec[..., src]
        out[..., src] = vec[..., src] - moved
        out[..., dst] = out[..., dst] + moved
    return out


def _restrict_to_support(vec: np.ndarray, support) -> np.ndarray:
    """Renormalized restriction of a probability vector to a component set."""
    if not support:
        return vec
    out = np.zeros_like(vec)
    idx = list(support)
    out[idx] = np.maximum(vec[idx], 0.0)
    total = float(out.sum())
    if total > 0.0:
        out /= total
    else:
        out[idx] = 1.0 / len(idx)
    return out


class AnalyticDenoiser:
    """Pipeline adapter around the closed-form mixture denoiser.

    Conditions are component index subsets (None = unconditional). The
    transfer payload is the full-length responsibility vector of the
    evaluation that produced it.

    Injection semantics (the analytic counterpart of replacing attention
    inside a deep denoiser, where swapped internals steer only part of the
    computation): an injected evaluation under condition C uses

        r_used = (1 - strength) * own(C) + strength * transported(payload)

    with transported() carrying the recorded vector across the source ->
    target component correspondence (shared components keep their recorded
    mass, and a retention fraction of each mapped component stays put; see
    transport_responsibilities). The own(C) share keeps the condition
    itself alive through injected steps; a full replacement would silence
    it, since responsibilities alone determine the analytic output.
    """

    payload_kind = "vector"

    def __init__(self, mixture: MixtureModel, sched: NoiseSchedule,
                 injection_strength: float = 0.5, source_retention: float = 0.35):
        if not 0.0 < injection_strength <= 1.0:
            raise ValueError("injection strength must lie in (0, 1]")
        self.mixture = mixture
        self.sched = sched
        self.injection_strength = injection_strength
        self.source_retention = source_retention

    def validate_condition(self, cond):
        return normalize_condition(cond, self.mixture.n_components)

    def injection_context(self, source_cond, target_cond):
        """Component correspondence for the edit plus the union support.

        Components the edit replaces are paired positionally; everything a
        transported vector may legitimately charge is the union of both
        condition subsets. Perturbed payloads can leak mass onto unrelated
        components (blur acts along the whole component axis), so injected
        vectors are restricted back to this support.
        """
        src = tuple(self.validate_condition(source_cond) or ())
        tgt = tuple(self.validate_condition(target_cond) or ())
        only_src = [c for c in src if c not in tgt]
        only_tgt = [c for c in tgt if c not in src]
        support = sorted(set(src) | set(tgt))
        return tuple(zip(only_src, only_tgt)), tuple(support)

    def eval(self, value, t, cond):
        return self.mixture.eps(value, t, self.sched, cond)

    def eval_record(self, value, t, cond):
        r = self.mixture.responsibilities(value, t, self.sched, cond)
        eps = self.mixture._eps_from_responsibilities(value, t, self.sched, r, False)
        return eps, r

    def eval_injected(self, value, t, cond, payload, context):
        mapping, support = context
        own = self.mixture.responsibilities(value, t, self.sched, cond)
        moved = transport_responsibilities(payload, mapping, self.source_retention)
        moved = _restrict_to_support(moved, support)
        lam = self.injection_strength
        used = (1.0 - lam) * own + lam * moved
        return self.mixture.eps_injected(value, t, self.sched, used)


class LearnedDenoiser:
    """Pipeline adapter around the trained attention denoiser.

    Conditions are integer condition ids (None = null condition). The
    transfer payload is the post-softmax self-attention matrix; injection
    replaces the editing path's attention outright.
    """

    payload_kind = "matrix"

    def __init__(self, params: DenoiserParams):
        self.params = params

    def validate_condition(self, cond):
        if cond is not None and not (0 <= int(cond) < self.params.n_cond):
            raise ValueError(f"condition id {cond} outside [0, {self.params.n_cond})")
        return cond

    def injection_context(self, source_cond, target_cond):
        return None

    def eval(self, value, t, cond):
        eps, _ = nn_forward(self.params, value, t, cond)
        return eps

    def eval_record(self, value, t, cond):
        return nn_forward(self.params, value, t, cond)

    def eval_injected(self, value, t, cond, payload, context):
        eps, _ = nn_forward(self.params, value, t, cond, inject=payload)
        return eps


@dataclass(frozen=True)
class EditRequest:
    """One edit: input sample, source/target conditions, and all settings."""

    z0: np.ndarray
    source_cond: object
    target_cond: object
    guidance: GuidanceConfig
    denoiser: object  # AnalyticDenoiser | LearnedDenoiser
    sched: NoiseSchedule
    recon_mode: str = "replay"
    seed: int = 0

    def __post_init__(self):
        if self.recon_mode not in ("replay", "resample"):
            raise ValueError(f"unknown reconstruction mode {self.recon_mode!r}")
        self.denoiser.validate_condition(self.source_cond)
        self.denoiser.validate_condition(self.target_cond)


@dataclass
class EditResult:
    """Everything one dual-path run produced, ordered by loop step t = T..1."""

    recon: np.ndarray
    edited: np.ndarray
    traj_recon: np.ndarray  # (T+1, dim), indexed by t
    traj_edit: np.ndarray  # (T+1, dim), indexed by t
    steps_t: np.ndarray  # (T,), descending
    injected: np.ndarray  # (T,) bool
    w_cfg_t: np.ndarray  # (T,)
    w_fg_t: np.ndarray  # (T,)
    eps_base: np.ndarray  # (T, dim): conditional term of the editing path
    eps_applied: np.ndarray  # (T, dim): combined output fed to the DDIM step
    d_cfg: np.ndarray  # (T, dim)
    d_fg: np.ndarray  # (T, dim); zeros where the FG branch was off
    packet: TransferPacket = field(repr=False, default=None)

    def direction_pairs(self):
        """(t, d_cfg, d_fg) for the steps where transfer was injected."""
        for i, t in enumerate(self.steps_t):
            if self.injected[i]:
                yield int(t), self.d_cfg[i], self.d_fg[i]

    def to_tensors(self) -> dict:
        return {
            "recon": self.recon,
            "edited": self.edited,
            "traj_recon": self.traj_recon,
            "traj_edit": self.traj_edit,
            "steps_t": self.steps_t.astype(np.float64),
            "injected": self.injected.astype(np.float64),
            "w_cfg_t": self.w_cfg_t,
            "w_fg_t": self.w_fg_t,
            "eps_base": self.eps_base,
            "eps_applied": self.eps_applied,
            "d_cfg": self.d_cfg,
            "d_fg": self.d_fg,
        }


def _check_finite(value: np.ndarray, t: int, path: str) -> None:
    if not np.all(np.isfinite(value)):
        raise RuntimeError(f"non-finite latent on the {path} path at t={t}")


def run_fgs(request: EditRequest) -> EditResult:
    """Full dual-path edit with capture, perturbed-transfer guidance, and
    scheduled scales. Deterministic given the request (seed included)."""
    g = request.guidance
    sched = request.sched
    den = request.denoiser
    T = sched.T
    z0 = np.asarray(request.z0, dtype=np.float64).ravel()
    dim = z0.size
    scales = g.scales_for(T)
    perturb_rng = SeededRng(request.seed, PERTURB_STREAM)

    inv = invert_trajectory(z0, den.eval, request.source_cond, sched)
    zT = inv[-1].value

    support = None
    if den.payload_kind == "vector" and request.source_cond is not None:
        support = tuple(int(c) for c in request.source_cond)
    packet = TransferPacket(tag=g.tag, support=support)
    context = den.injection_context(request.source_cond, request.target_cond)

    traj_recon = np.empty((T + 1, dim))
    traj_edit = np.empty((T + 1, dim))
    traj_recon[T] = zT
    traj_edit[T] = zT
    steps_t = np.arange(T, 0, -1, dtype=np.int64)
    injected = np.zeros(T, dtype=bool)
    eps_base = np.empty((T, dim))
    eps_applied = np.empty((T, dim))
    d_cfg = np.empty((T, dim))
    d_fg = np.zeros((T, dim))
    w_cfg_arr = np.empty(T)
    w_fg_arr = np.empty(T)

    recon_state = LatentState(zT, T)
    edit_state = LatentState(zT.copy(), T)
    fg_enabled = g.w_fg > 0.0

    for i, t in enumerate(range(T, 0, -1)):
        if request.recon_mode == "replay":
            recon_state = inv[t]
        # reconstruction path: plain CFG at the constant base scale; its
        # conditional evaluation is the one whose payload is transferred.
        eps_c_s, payload = den.eval_record(recon_state.value, t, request.source_cond)
        packet.record(t, payload)
        eps_u_s = den.eval(recon_state.value, t, None)
        eps_recon = cfg_combine(eps_c_s, eps_u_s, g.w_cfg)

        w_cfg_t, w_fg_t = float(scales.w_cfg[i]), float(scales.w_fg[i])
        w_cfg_arr[i], w_fg_arr[i] = w_cfg_t, w_fg_t
        if should_inject(t, T, g.policy):
            injected[i] = True
            eps_ci = den.eval_injected(edit_state.value, t, request.target_cond, payload, context)
            eps_ui = den.eval_injected(edit_state.value, t, None, payload, context)
            d_cfg[i] = eps_ci - eps_ui
            if fg_enabled:
                payload_p = perturb(payload, g.perturb, perturb_rng)
                eps_cip = den.eval_injected(edit_state.value, t, request.target_cond,
                                            payload_p, context)
                d_fg[i] = eps_ci - eps_cip
                eps_edit = combined(eps_ci, eps_ui, eps_cip, w_cfg_t, w_fg_t)
            else:
                eps_edit = cfg_combine(eps_ci, eps_ui, w_cfg_t)
        else:
            eps_ci = den.eval(edit_state.value, t, request.target_cond)
            eps_ui = den.eval(edit_state.value, t, None)
            d_cfg[i] = eps_ci - eps_ui
            eps_edit = cfg_combine(eps_ci, eps_ui, w_cfg_t)
        eps_base[i] = eps_ci
        eps_applied[i] = eps_edit

        if request.recon_mode == "replay":
            traj_recon[t - 1] = inv[t - 1].value
        else:
            recon_state = ddim_sample_step(recon_state, eps_recon, sched)
            _check_finite(recon_state.value, t - 1, "reconstruction")
            traj_recon[t - 1] = recon_state.value
        edit_state = ddim_sample_step(edit_state, eps_edit, sched)
        _check_finite(edit_state.value, t - 1, "editing")
        traj_edit[t - 1] = edit_state.value

    recon = z0.copy() if request.recon_mode == "replay" else traj_recon[0].copy()
    return EditResult(
        recon=recon,
        edited=edit_state.value.copy(),
        traj_recon=traj_recon,
        traj_edit=traj_edit,
        steps_t=steps_t,
        injected=injected,
        w_cfg_t=w_cfg_arr,
        w_fg_t=w_fg_arr,
        eps_base=eps_base,
        eps_applied=eps_applied,
        d_cfg=d_cfg,
        d_fg=d_fg,
        packet=packet,
    )


def run_baseline(request: EditRequest) -> EditResult:
    """Injection-only editing: the faithfulness term is forced to zero and
    no perturbation is ever computed. Identical to run_fgs with w_fg=0."""
    return run_fgs(replace(request, guidance=request.guidance.with_(w_fg=0.0)))


def reconstruct_only(z0: np.ndarray, source_cond, denoiser, sched: NoiseSchedule,
                     mode: str = "replay", w_cfg: float = 0.0,
                     tag: str = "layout") -> tuple:
    """Reconstruction path on its own: returns (recon, trajectory, packet).

    replay: the stored inversion trajectory is the path; the denoiser runs
    along it only to capture payloads, so recon is the input itself.
    resample: CFG-guided DDIM sampling from the inverted latent.
    """
    if mode not in ("replay", "resample"):
        raise ValueError(f"unknown reconstruction mode {mode!r}")
    z0 = np.asarray(z0, dtype=np.float64).ravel()
    inv = invert_trajectory(z0, denoiser.eval, source_cond, sched)
    support = None
    if denoiser.payload_kind == "vector" and source_cond is not None:
        support = tuple(int(c) for c in source_cond)
    packet = TransferPacket(tag=tag, support=support)
    T = sched.T
    traj = np.empty((T + 1, z0.size))
    traj[T] = inv[-1].value
    state = LatentState(inv[-1].value, T)
    for t in range(T, 0, -1):
        if mode == "replay":
            state = inv[t]
        eps_c, payload = denoiser.eval_record(state.value, t, source_cond)
        packet.record(t, payload)
        if mode == "replay":
            traj[t - 1] = inv[t - 1].value
        else:
            eps_u = denoiser.eval(state.value, t, None)
            state = ddim_sample_step(state, cfg_combine(eps_c, eps_u, w_cfg), sched)
            _check_finite(state.value, t - 1, "reconstruction")
            traj[t - 1] = state.value
    recon = z0.copy() if mode == "replay" else traj[0].copy()
    return recon, traj, packet
