"""Benchmark edits, ablation sweeps, and the direction-misalignment study.

The standard benchmark edits procedural scenes by changing the shape
class while keeping the slot, using the analytic mixture denoiser (no
training needed): the mixture has one broad "background" component plus
one component per scene class, and a class condition is the component
pair {background, class}. Overlapping source/target conditions are what
make the transferred responsibilities informative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import metrics, scenes
from .config import Config
from .denoiser import ClassifierParams, classifier_train
from .guidance import GuidanceConfig
from .mixture import MixtureModel
from .pipeline import AnalyticDenoiser, EditRequest, EditResult, run_fgs
from .transfer import PerturbKind

__all__ = [
    "MetricsRow",
    "CSV_HEADER",
    "benchmark_mixture",
    "analytic_condition",
    "target_class",
    "edit_scene",
    "run_benchmark",
    "sweep",
    "misalignment_study",
    "benchmark_classifier",
]

CSV_HEADER = [
    "run_id", "tau", "k", "sigma", "w_fg", "perturb",
    "faithfulness_whole", "faithfulness_unedited", "structure_selfsim",
    "editability_whole", "editability_edited", "mean_cosine",
]


@dataclass
class MetricsRow:
    run_id: str
    tau: float
    k: float
    sigma: float
    w_fg: float
    perturb: str
    faithfulness_whole: float
    faithfulness_unedited: float
    structure_selfsim: float
    editability_whole: float
    editability_edited: float
    mean_cosine: float

    def as_list(self) -> list:
        return [
            self.run_id, self.tau, self.k, self.sigma, self.w_fg, self.perturb,
            self.faithfulness_whole, self.faithfulness_unedited, self.structure_selfsim,
            self.editability_whole, self.editability_edited, self.mean_cosine,
        ]


def derived_seed(base: int, run_id: int) -> int:
    """Per-run RNG seed: a deterministic hash of (base seed, run id)."""
    return int(np.random.SeedSequence([int(base), int(run_id)]).generate_state(1, np.uint64)[0])


def benchmark_mixture(bg_sigma: float = 0.3, class_sigma: float = 0.06,
                      bg_weight: float = 0.25) -> MixtureModel:
    """Scene mixture: component 0 is a broad background-only Gaussian, then
    one tight component per class prototype."""
    means = [np.full(scenes.GRID * scenes.GRID, scenes.BACKGROUND)]
    variances = [bg_sigma**2]
    for cid in range(scenes.N_CLASSES):
        means.append(scenes.prototype(cid).ravel())
        variances.append(class_sigma**2)
    class_weight = (1.0 - bg_weight) / scenes.N_CLASSES
    weights = [bg_weight] + [class_weight] * scenes.N_CLASSES
    return MixtureModel(
        weights=np.asarray(weights),
        means=np.asarray(means),
        variances=np.asarray(variances),
    )


def analytic_condition(cid: int) -> tuple:
    """Condition subset for a class: the shared background component plus
    the class's own component."""
    return (0, 1 + int(cid))


def target_class(cid: int, alternative: int = 0) -> int:
    """Change the shape, keep the slot. alternative selects which of the
    two other shapes becomes the target."""
    shape_idx, slot_idx = divmod(int(cid), len(scenes.SLOTS))
    new_shape = (shape_idx + 1 + int(alternative)) % len(scenes.SHAPES)
    return new_shape * len(scenes.SLOTS) + slot_idx


def benchmark_classifier(cfg: Config | None = None) -> ClassifierParams:
    cfg = cfg or Config()
    data = scenes.gen_dataset(cfg.get_int("dataset.seed"), cfg.get_int("dataset.size"))
    return classifier_train([(s.image, s.cond_id) for s in data])


def edit_scene(scene: scenes.Scene, guidance: GuidanceConfig, denoiser: AnalyticDenoiser,
               seed: int, alternative: int = 0, recon_mode: str = "replay") -> tuple:
    """Run one benchmark edit; returns (EditResult, target class id)."""
    tgt = target_class(scene.cond_id, alternative)
    request = EditRequest(
        z0=scene.image.ravel(),
        source_cond=analytic_condition(scene.cond_id),
        target_cond=analytic_condition(tgt),
        guidance=guidance,
        denoiser=denoiser,
        sched=denoiser.sched,
        recon_mode=recon_mode,
        seed=seed,
    )
    return run_fgs(request), tgt


def score_edit(scene: scenes.Scene, result: EditResult, tgt: int,
               classifier: ClassifierParams, run_id: str,
               guidance: GuidanceConfig) -> MetricsRow:
    edited = result.edited.reshape(scenes.GRID, scenes.GRID)
    whole, unedited = metrics.faithfulness_distance(scene.image, edited, scene.mask)
    selfsim = metrics.structure_selfsim_distance(scene.image, edited)
    e_whole, e_region = metrics.editability_score(edited, tgt, classifier, scene.mask)
    curve = metrics.misalignment_curve(result)
    mean_cos = float(np.mean([c for _, c in curve])) if curve else 0.0
    sigma = guidance.perturb.sigma if guidance.perturb.kind == "blur" else 0.0
    return MetricsRow(
        run_id=run_id,
        tau=guidance.tau,
        k=guidance.k,
        sigma=sigma,
        w_fg=guidance.w_fg,
        perturb=guidance.perturb.kind,
        faithfulness_whole=whole,
        faithfulness_unedited=unedited,
        structure_selfsim=selfsim,
        editability_whole=e_whole,
        editability_edited=e_region,
        mean_cosine=mean_cos,
    )


def _benchmark_parts(cfg: Config):
    mix = benchmark_mixture(
        cfg.get_float("benchmark.bg_sigma"),
        cfg.get_float("benchmark.class_sigma"),
        cfg.get_float("benchmark.bg_weight"),
    )
    denoiser = AnalyticDenoiser(mix, cfg.schedule(),
                                cfg.get_float("benchmark.injection_strength"),
                                cfg.get_float("benchmark.source_retention"))
    bench_scenes = scenes.gen_dataset(cfg.get_int("benchmark.seed"), cfg.get_int("benchmark.scenes"))
    return denoiser, bench_scenes


def baseline_guidance(cfg: Config, tau: float | None = None) -> GuidanceConfig:
    """Plain injection editing: constant CFG scale, no faithfulness term."""
    g = cfg.guidance()
    return g.with_(w_fg=0.0, schedule_cfg=False, schedule_fg=False,
                   tau=g.tau if tau is None else tau)


def fg_guidance(cfg: Config) -> GuidanceConfig:
    """Faithfulness term at a constant scale (no scheduling)."""
    return cfg.guidance().with_(schedule_cfg=False, schedule_fg=False)


def fgs_guidance(cfg: Config) -> GuidanceConfig:
    """Full method: faithfulness term plus log-scheduled scales."""
    return cfg.guidance()


def run_benchmark(cfg: Config | None = None, variants: dict | None = None,
                  classifier: ClassifierParams | None = None) -> dict:
    """Run named guidance variants over the benchmark scenes.

    Returns {variant name: [MetricsRow, ...]}. Per-run seeds are hashed
    from the benchmark seed and a stable run id, so the output is
    deterministic and independent of execution order.
    """
    cfg = cfg or Config()
    if variants is None:
        variants = {
            "baseline-0.4": baseline_guidance(cfg, 0.4),
            "baseline-0.5": baseline_guidance(cfg, 0.5),
            "baseline-0.6": baseline_guidance(cfg, 0.6),
            "fg-0.5": fg_guidance(cfg),
            "fgs-0.5": fgs_guidance(cfg),
        }
    denoiser, bench_scenes = _benchmark_parts(cfg)
    classifier = classifier or benchmark_classifier(cfg)
    base_seed = cfg.get_int("benchmark.seed")
    recon_mode = cfg.get("recon.mode")
    out: dict = {}
    for v_idx, (name, guidance) in enumerate(variants.items()):
        rows = []
        for s_idx, scene in enumerate(bench_scenes):
            run_id = v_idx * 10000 + s_idx
            result, tgt = edit_scene(scene, guidance, denoiser,
                                     seed=derived_seed(base_seed, run_id),
                                     recon_mode=recon_mode)
            rows.append(score_edit(scene, result, tgt, classifier,
                                   f"{name}/{s_idx}", guidance))
        out[name] = rows
    return out


def median(rows, attr: str) -> float:
    return float(np.median([getattr(r, attr) for r in rows]))


def sweep(cfg: Config | None = None) -> list:
    """One-at-a-time ablation grids over k, blur sigma, and w_fg.

    Every grid point is run on every benchmark scene with the other
    parameters at their configured defaults; rows are ordered by grid then
    scene, so the CSV is reproducible byte for byte.
    """
    cfg = cfg or Config()
    denoiser, bench_scenes = _benchmark_parts(cfg)
    classifier = benchmark_classifier(cfg)
    base_seed = cfg.get_int("benchmark.seed")
    recon_mode = cfg.get("recon.mode")
    fgs = fgs_guidance(cfg)
    points = []
    for k in cfg.get_floats("sweep.k"):
        points.append((f"k={k:g}", fgs.with_(k=k)))
    for sigma in cfg.get_floats("sweep.sigma"):
        points.append((f"sigma={sigma:g}", fgs.with_(perturb=PerturbKind.blur(sigma))))
    for w_fg in cfg.get_floats("sweep.w_fg"):
        points.append((f"w_fg={w_fg:g}", fgs.with_(w_fg=w_fg)))
    rows = []
    for p_idx, (label, guidance) in enumerate(points):
        for s_idx, scene in enumerate(bench_scenes):
            run_id = 1_000_000 + p_idx * 10000 + s_idx
            result, tgt = edit_scene(scene, guidance, denoiser,
                                     seed=derived_seed(base_seed, run_id),
                                     recon_mode=recon_mode)
            rows.append(score_edit(scene, result, tgt, classifier,
                                   f"{label}/{s_idx}", guidance))
    return rows


def misalignment_study(cfg: Config | None = None, n_runs: int = 100) -> tuple:
    """Mean cosine between the two guidance directions per injected step.

    Uses the full method over benchmark scenes, editing each scene toward
    both alternative shapes until n_runs edits are collected. Returns
    (curve rows (t, mean cosine, count), results).
    """
    cfg = cfg or Config()
    denoiser, bench_scenes = _benchmark_parts(cfg)
    guidance = fgs_guidance(cfg)
    base_seed = cfg.get_int("benchmark.seed")
    recon_mode = cfg.get("recon.mode")
    results = []
    run_id = 2_000_000
    for alternative in (0, 1):
        for scene in bench_scenes:
            if len(results) >= n_runs:
                break
            result, _ = edit_scene(scene, guidance, denoiser,
                                   seed=derived_seed(base_seed, run_id),
                                   alternative=alternative, recon_mode=recon_mode)
            results.append(result)
            run_id += 1
    curve = metrics.mean_misalignment_curve(results)
    return curve, results
