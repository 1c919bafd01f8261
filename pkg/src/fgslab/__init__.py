"""fgslab: a desk-scale guided-diffusion image-editing laboratory.

Dual-path DDIM editing with classifier-free guidance, perturbation-based
faithfulness guidance, and log-scheduled guidance scales, plus an
experiment harness (procedural scenes, metrics, sweeps, persistence).
"""

from . import arrays, bench, config, denoiser, diffusion, guidance, metrics, mixture
from . import pipeline, scenes, storage, transfer
from .arrays import SeededRng, cosine_similarity, gaussian_kernel
from .diffusion import (
    LatentState,
    NoiseSchedule,
    a_coef,
    add_noise,
    ddim_invert_step,
    ddim_sample_step,
    invert_trajectory,
    make_schedule,
)
from .guidance import GuidanceConfig, cfg_combine, combined, fg_combine, schedule_scales
from .mixture import MixtureModel
from .pipeline import (
    AnalyticDenoiser,
    EditRequest,
    EditResult,
    LearnedDenoiser,
    reconstruct_only,
    run_baseline,
    run_fgs,
)
from .transfer import InjectionPolicy, PerturbKind, TransferPacket, perturb, should_inject

__version__ = "0.1.0"
