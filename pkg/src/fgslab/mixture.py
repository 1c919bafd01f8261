"""Closed-form Gaussian-mixture denoiser.

For a mixture with isotropic per-component covariance, the posterior over
components at a noisy latent and the conditional expectation E[z_0 | z_t]
are available in closed form, which makes the exact noise prediction
E[eps | z_t, c] computable without any training. Conditioning on a subset
of components means restricting and renormalizing the prior, so the
conditional/unconditional pair needed by classifier-free guidance has a
ground-truth meaning here.

All densities are evaluated in the log domain with log-sum-exp
stabilization; far tails would otherwise underflow in double precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .diffusion import NoiseSchedule

__all__ = ["MixtureModel", "normalize_condition"]

WEIGHT_SUM_TOL = 1e-12
ALPHA_ONE_GUARD = 1e-12


def normalize_condition(cond, n_components: int):
    """Validate a component-subset condition; None means unconditional."""
    if cond is None:
        return None
    indices = tuple(int(i) for i in cond)
    if len(indices) == 0:
        raise ValueError("condition subset must be nonempty (use None for unconditional)")
    if len(set(indices)) != len(indices):
        raise ValueError(f"condition subset has duplicates: {indices}")
    for i in indices:
        if not 0 <= i < n_components:
            raise ValueError(f"component index {i} outside [0, {n_components})")
    return indices


@dataclass(frozen=True)
class MixtureModel:
    """Gaussian mixture with scalar (isotropic) covariance per component.

    weights: (J,) mixing weights summing to 1.
    means: (J, dim) component means.
    variances: (J,) per-component variances s^2 (0 allowed: point mass).
    """

    weights: np.ndarray = field(repr=False)
    means: np.ndarray = field(repr=False)
    variances: np.ndarray = field(repr=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        m = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        v = np.asarray(self.variances, dtype=np.float64)
        if w.ndim != 1 or m.shape[0] != w.shape[0] or v.shape != w.shape:
            raise ValueError(f"inconsistent component shapes: {w.shape}, {m.shape}, {v.shape}")
        if np.any(w <= 0):
            raise ValueError("mixture weights must be positive")
        if abs(float(w.sum()) - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"mixture weights must sum to 1, got {w.sum()!r}")
        if np.any(v < 0):
            raise ValueError("variances must be >= 0")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "variances", v)

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def sample(self, rng, n: int, cond=None) -> np.ndarray:
        """Draw n samples from the (restricted, renormalized) mixture."""
        idx = self.component_indices(cond)
        w = self.weights[list(idx)]
        w = w / w.sum()
        choice = np.searchsorted(np.cumsum(w), rng.uniform(0.0, 1.0, n), side="right")
        choice = np.minimum(choice, len(idx) - 1)
        comp = np.asarray(idx)[choice]
        noise = rng.standard_normal((n, self.dim))
        return self.means[comp] + np.sqrt(self.variances[comp])[:, None] * noise

    def component_indices(self, cond=None) -> tuple:
        c = normalize_condition(cond, self.n_components)
        return tuple(range(self.n_components)) if c is None else c

    def _log_noisy_densities(self, value: np.ndarray, t: int, sched: NoiseSchedule) -> np.ndarray:
        """log[w_j N(z; sqrt(a) mu_j, (a s_j^2 + 1 - a) I)] for every j, batched."""
        z = np.asarray(value, dtype=np.float64)
        a = sched.alpha[sched.check_t(t)]
        noisy_var = np.maximum(a * self.variances + (1.0 - a), 1e-300)
        diff = z[..., None, :] - np.sqrt(a) * self.means  # (..., J, dim)
        sq = np.sum(diff * diff, axis=-1)
        with np.errstate(divide="ignore"):
            log_w = np.log(self.weights)
        return (
            log_w
            - 0.5 * self.dim * np.log(2.0 * np.pi * noisy_var)
            - 0.5 * sq / noisy_var
        )

    def responsibilities(self, value, t, sched, cond=None, with_flag: bool = False):
        """Posterior component probabilities at a noisy latent, restricted to cond.

        Returns a full-length (..., J) vector that is zero outside the
        condition's support and sums to 1 over it. If every restricted
        density underflows, the result is uniform over cond and flagged.
        """
        idx = list(self.component_indices(cond))
        logd = self._log_noisy_densities(value, t, sched)
        restricted = logd[..., idx]
        norm = logsumexp(restricted, axis=-1, keepdims=True)
        degenerate = ~np.isfinite(norm[..., 0])
        with np.errstate(invalid="ignore"):
            probs = np.exp(restricted - norm)
        if np.any(degenerate):
            probs = np.where(degenerate[..., None], 1.0 / len(idx), probs)
        out = np.zeros(logd.shape, dtype=np.float64)
        out[..., idx] = probs
        if with_flag:
            return out, bool(np.any(degenerate))
        return out

    def posterior_means(self, value, t, sched) -> np.ndarray:
        """E[z_0 | z_t, component j] for every j: standard Gaussian conditioning."""
        z = np.asarray(value, dtype=np.float64)
        a = sched.alpha[sched.check_t(t)]
        noisy_var = np.maximum(a * self.variances + (1.0 - a), 1e-300)
        gain = np.sqrt(a) * self.variances / noisy_var  # (J,)
        diff = z[..., None, :] - np.sqrt(a) * self.means
        return self.means + gain[:, None] * diff

    def eps(self, value, t, sched, cond=None, with_flag: bool = False):
        """Exact E[eps | z_t, cond]: the ideal denoiser output at this latent."""
        r = self.responsibilities(value, t, sched, cond)
        return self._eps_from_responsibilities(value, t, sched, r, with_flag)

    def eps_injected(self, value, t, sched, injected_r, with_flag: bool = False):
        """Denoiser output with externally supplied component responsibilities.

        injected_r is a full-length (..., J) probability vector replacing the
        model's own posterior; this is how reconstruction-path information is
        forced into the editing path in the analytic setup.
        """
        r = np.asarray(injected_r, dtype=np.float64)
        if r.shape[-1] != self.n_components:
            raise ValueError(f"injected responsibilities must have length {self.n_components}")
        if np.any(r < -1e-12) or np.any(np.abs(r.sum(axis=-1) - 1.0) > 1e-9):
            raise ValueError("injected responsibilities must be a probability vector")
        return self._eps_from_responsibilities(value, t, sched, r, with_flag)

    def _eps_from_responsibilities(self, value, t, sched, r, with_flag):
        z = np.asarray(value, dtype=np.float64)
        t = sched.check_t(t)
        a = sched.alpha[t]
        if 1.0 - a < ALPHA_ONE_GUARD:
            out = np.zeros_like(z)
            return (out, True) if with_flag else out
        post = self.posterior_means(z, t, sched)  # (..., J, dim)
        z0_hat = np.sum(r[..., None] * post, axis=-2)
        out = (z - np.sqrt(a) * z0_hat) / np.sqrt(1.0 - a)
        return (out, False) if with_flag else out
