"""Command-line front end.

Subcommands: gen-data, train, edit, sweep, misalign, export. Global
flags: --config <path>, --seed <u64>, --out <dir>. See the README for the
config grammar.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import bench, metrics, scenes, storage
from .config import Config, load_config
from .denoiser import TrainConfig, classifier_train, train
from .pipeline import AnalyticDenoiser, LearnedDenoiser
from .storage import export_pgm, export_svg_plot, load_checkpoint, save_checkpoint, write_csv


def _config(args) -> Config:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.values["benchmark.seed"] = str(args.seed)
        cfg.values["dataset.seed"] = str(args.seed)
        cfg.values["train.seed"] = str(args.seed)
    return cfg


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen_data(args) -> int:
    cfg = _config(args)
    out = _out_dir(args)
    data = scenes.gen_dataset(cfg.get_int("dataset.seed"), cfg.get_int("dataset.size"))
    tensors = {
        "images": np.stack([s.image for s in data]),
        "cond_ids": np.asarray([s.cond_id for s in data], dtype=np.float64),
        "masks": np.stack([s.mask.astype(np.float64) for s in data]),
    }
    save_checkpoint(out / "scenes.fgs1", tensors, {
        "module": "scenes", "seed": cfg.get("dataset.seed"), "count": str(len(data)),
    })
    for i, scene in enumerate(data[: args.previews]):
        export_pgm(scene.image, out / f"scene_{i:03d}_{scenes.class_name(scene.cond_id)}.pgm")
    print(f"wrote {len(data)} scenes to {out / 'scenes.fgs1'}")
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    out = _out_dir(args)
    data = scenes.gen_dataset(cfg.get_int("dataset.seed"), cfg.get_int("dataset.size"))
    pairs = [(s.image, s.cond_id) for s in data]
    sched = cfg.schedule()
    hyper = TrainConfig(
        steps=cfg.get_int("train.steps"),
        batch=cfg.get_int("train.batch"),
        learning_rate=cfg.get_float("train.lr"),
        seed=cfg.get_int("train.seed"),
    )
    params = train(pairs, hyper, sched)
    save_checkpoint(out / "denoiser.fgs1", params.tensors(), {
        "module": "denoiser", "seed": str(hyper.seed),
        "schedule": f"{sched.kind}:{sched.T}", "steps": str(hyper.steps),
    })
    clf = classifier_train(pairs)
    save_checkpoint(out / "classifier.fgs1", {"weights": clf.weights}, {"module": "classifier"})
    print(f"wrote {out / 'denoiser.fgs1'} and {out / 'classifier.fgs1'}")
    return 0


def _denoiser_for(cfg: Config, args):
    sched = cfg.schedule()
    if getattr(args, "denoiser", "analytic") == "learned":
        if not args.params:
            raise SystemExit("--params <denoiser.fgs1> is required with --denoiser learned")
        tensors, _ = load_checkpoint(args.params)
        from .denoiser import DenoiserParams

        return LearnedDenoiser(DenoiserParams(**tensors)), sched
    mix = cfg.mixture()
    if mix is None:
        mix = bench.benchmark_mixture(
            cfg.get_float("benchmark.bg_sigma"),
            cfg.get_float("benchmark.class_sigma"),
            cfg.get_float("benchmark.bg_weight"),
        )
    return AnalyticDenoiser(mix, sched), sched


def cmd_edit(args) -> int:
    cfg = _config(args)
    out = _out_dir(args)
    denoiser, sched = _denoiser_for(cfg, args)
    data = scenes.gen_dataset(cfg.get_int("benchmark.seed"), cfg.get_int("benchmark.scenes"))
    scene = data[args.scene]
    guidance = bench.fgs_guidance(cfg) if args.method == "fgs" else (
        bench.fg_guidance(cfg) if args.method == "fg" else bench.baseline_guidance(cfg)
    )
    if isinstance(denoiser, LearnedDenoiser):
        tgt = bench.target_class(scene.cond_id)
        from .pipeline import EditRequest, run_fgs

        request = EditRequest(
            z0=scene.image.ravel(), source_cond=scene.cond_id, target_cond=tgt,
            guidance=guidance, denoiser=denoiser, sched=sched,
            recon_mode=cfg.get("recon.mode"),
            seed=bench.derived_seed(cfg.get_int("benchmark.seed"), args.scene),
        )
        result = run_fgs(request)
    else:
        result, tgt = bench.edit_scene(
            scene, guidance, denoiser,
            seed=bench.derived_seed(cfg.get_int("benchmark.seed"), args.scene),
            recon_mode=cfg.get("recon.mode"),
        )
    classifier = bench.benchmark_classifier(cfg)
    row = bench.score_edit(scene, result, tgt, classifier, f"edit/{args.scene}", guidance)
    export_pgm(np.clip(scene.image, 0, 1), out / "input.pgm")
    export_pgm(np.clip(result.recon.reshape(16, 16), 0, 1), out / "recon.pgm")
    export_pgm(np.clip(result.edited.reshape(16, 16), 0, 1), out / "edited.pgm")
    save_checkpoint(out / "edit_result.fgs1", result.to_tensors(), {
        "module": "pipeline", "scene": str(args.scene), "method": args.method,
    })
    write_csv(out / "edit_metrics.csv", bench.CSV_HEADER, [row.as_list()])
    print(f"edited scene {args.scene} ({scenes.class_name(scene.cond_id)} -> "
          f"{scenes.class_name(tgt)}): metrics in {out / 'edit_metrics.csv'}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    out = _out_dir(args)
    rows = bench.sweep(cfg)
    write_csv(out / "sweep.csv", bench.CSV_HEADER, [r.as_list() for r in rows])
    print(f"wrote {len(rows)} rows to {out / 'sweep.csv'}")
    return 0


def cmd_misalign(args) -> int:
    cfg = _config(args)
    out = _out_dir(args)
    curve, _ = bench.misalignment_study(cfg, n_runs=args.runs)
    write_csv(out / "misalignment.csv", ["t", "mean_cosine", "runs"],
              [[t, c, n] for t, c, n in curve])
    ts = [t for t, _, _ in curve]
    cs = [c for _, c, _ in curve]
    export_svg_plot([("mean cosine", ts, cs)], out / "misalignment.svg",
                    title="Guidance direction alignment",
                    xlabel="timestep", ylabel="cosine similarity")
    print(f"wrote {out / 'misalignment.csv'} and {out / 'misalignment.svg'}")
    return 0


def cmd_export(args) -> int:
    out = _out_dir(args)
    tensors, _ = load_checkpoint(args.checkpoint)
    if args.tensor not in tensors:
        raise SystemExit(f"tensor {args.tensor!r} not in checkpoint; has {sorted(tensors)}")
    arr = tensors[args.tensor]
    dest = out / f"{args.tensor}.{args.format}"
    if args.format == "pgm":
        export_pgm(np.clip(arr, 0.0, 1.0), dest)
    else:
        flat = arr.ravel()
        export_svg_plot([(args.tensor, np.arange(flat.size), flat)], dest,
                        title=args.tensor, xlabel="index", ylabel="value")
    print(f"wrote {dest}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fgslab", description=__doc__)
    parser.add_argument("--config", default=None, help="config file (section.key = value)")
    parser.add_argument("--seed", type=int, default=None, help="override configured seeds")
    parser.add_argument("--out", default="out", help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate the procedural scene dataset")
    p.add_argument("--previews", type=int, default=6, help="PGM previews to write")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train the attention denoiser and the classifier")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("edit", help="run one dual-path edit")
    p.add_argument("--scene", type=int, default=0)
    p.add_argument("--method", choices=("baseline", "fg", "fgs"), default="fgs")
    p.add_argument("--denoiser", choices=("analytic", "learned"), default="analytic")
    p.add_argument("--params", default=None, help="denoiser checkpoint for --denoiser learned")
    p.set_defaults(func=cmd_edit)

    p = sub.add_parser("sweep", help="run the hyperparameter ablation grids")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("misalign", help="mean guidance-direction cosine per timestep")
    p.add_argument("--runs", type=int, default=100)
    p.set_defaults(func=cmd_misalign)

    p = sub.add_parser("export", help="export a checkpoint tensor to PGM or SVG")
    p.add_argument("checkpoint")
    p.add_argument("--tensor", required=True)
    p.add_argument("--format", choices=("pgm", "svg"), default="pgm")
    p.set_defaults(func=cmd_export)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
