"""Scratch calibration: scan benchmark mixture parameters and check the
trend criteria. Not part of the package."""
import sys
import time
import numpy as np

from fgslab import bench, metrics, scenes
from fgslab.config import Config


def medians(rows):
    return {
        "fu": bench.median(rows, "faithfulness_unedited"),
        "fw": bench.median(rows, "faithfulness_whole"),
        "ee": bench.median(rows, "editability_edited"),
        "ew": bench.median(rows, "editability_whole"),
        "ss": bench.median(rows, "structure_selfsim"),
    }


def check(cfg, n_scenes=12, verbose=True):
    cfg.values["benchmark.scenes"] = str(n_scenes)
    classifier = bench.benchmark_classifier(cfg)
    variants = {
        "b4": bench.baseline_guidance(cfg, 0.4),
        "b5": bench.baseline_guidance(cfg, 0.5),
        "b6": bench.baseline_guidance(cfg, 0.6),
        "fg": bench.fg_guidance(cfg),
        "fgs": bench.fgs_guidance(cfg),
    }
    t0 = time.time()
    out = bench.run_benchmark(cfg, variants, classifier)
    dt = time.time() - t0
    m = {k: medians(v) for k, v in out.items()}
    if verbose:
        for k, v in m.items():
            print(f"  {k:4s} fu={v['fu']:.4f} fw={v['fw']:.4f} ee={v['ee']:8.3f} ew={v['ew']:8.3f} ss={v['ss']:.4f}")
    a = m["b4"]["fu"] >= m["b5"]["fu"] >= m["b6"]["fu"]
    a2 = m["b4"]["ee"] >= m["b5"]["ee"] >= m["b6"]["ee"]
    b = m["fgs"]["fu"] < 0.95 * m["b5"]["fu"]
    c = (m["b5"]["ee"] - m["fgs"]["ee"]) < (m["b5"]["ee"] - m["b6"]["ee"])
    fg_weaker = m["fgs"]["fu"] < m["fg"]["fu"] < m["b5"]["fu"]
    print(f"  A6a faith mono tau: {a}  A6a edit mono tau: {a2}  A6b fgs<0.95*b5: {b} "
          f"({m['fgs']['fu']:.4f} vs {0.95 * m['b5']['fu']:.4f})  A6c: {c}  FG between: {fg_weaker}  [{dt:.0f}s]")
    return a and a2 and b and c


if __name__ == "__main__":
    base = Config()
    grids = [
        # (bg_sigma, class_sigma, bg_weight)
        (0.3, 0.2, 0.143),
        (0.35, 0.2, 0.1),
        (0.3, 0.15, 0.1),
        (0.4, 0.25, 0.143),
        (0.25, 0.12, 0.05),
    ]
    for bg_s, cl_s, bg_w in grids:
        cfg = Config()
        cfg.values["benchmark.bg_sigma"] = str(bg_s)
        cfg.values["benchmark.class_sigma"] = str(cl_s)
        cfg.values["benchmark.bg_weight"] = str(bg_w)
        print(f"bg_sigma={bg_s} class_sigma={cl_s} bg_weight={bg_w}")
        check(cfg)
