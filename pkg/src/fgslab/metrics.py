"""Desk-scale edit-quality metrics.

Faithfulness is measured as root-mean-square pixel distance between the
input and the edited image (whole image and outside the edit mask) plus a
patch self-similarity structure distance; editability as the classifier
log-probability of the target class. Absolute values are on this lab's
own scale; only orderings and trends are comparable across methods.
"""

from __future__ import annotations

import numpy as np

from .arrays import cosine_similarity
from .denoiser import ClassifierParams, classify

__all__ = [
    "faithfulness_distance",
    "structure_selfsim_distance",
    "editability_score",
    "misalignment_curve",
    "mean_misalignment_curve",
]


def faithfulness_distance(input_img: np.ndarray, edited: np.ndarray, mask: np.ndarray,
                          with_flag: bool = False):
    """RMS pixel distance over the whole image and over the unedited region.

    The unedited region is the complement of the mask; when the mask covers
    everything, the unedited distance is reported as 0 and flagged.
    """
    a = np.asarray(input_img, dtype=np.float64)
    b = np.asarray(edited, dtype=np.float64)
    m = np.asarray(mask, dtype=bool)
    if a.shape != b.shape or a.shape != m.shape:
        raise ValueError(f"shape mismatch: {a.shape}, {b.shape}, {m.shape}")
    sq = (a - b) ** 2
    whole = float(np.sqrt(sq.mean()))
    outside = ~m
    degenerate = not outside.any()
    unedited = 0.0 if degenerate else float(np.sqrt(sq[outside].mean()))
    if with_flag:
        return (whole, unedited), degenerate
    return whole, unedited


def _selfsim_matrix(img: np.ndarray, patch: int) -> np.ndarray:
    """Cosine self-similarity between mean-centered patches."""
    h, w = img.shape
    if h % patch or w % patch:
        raise ValueError(f"image {img.shape} not divisible into {patch}x{patch} patches")
    tiles = (
        img.reshape(h // patch, patch, w // patch, patch)
        .transpose(0, 2, 1, 3)
        .reshape(-1, patch * patch)
    )
    centered = tiles - tiles.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(centered, axis=1)
    safe = np.where(norms > 0.0, norms, 1.0)
    unit = centered / safe[:, None]
    unit[norms == 0.0] = 0.0  # degenerate flat patches contribute zero similarity
    return np.clip(unit @ unit.T, -1.0, 1.0)


def structure_selfsim_distance(input_img: np.ndarray, edited: np.ndarray,
                               patch: int = 4) -> float:
    """Frobenius distance between patch self-similarity matrices, divided by
    the number of patches. Invariant to positive affine intensity changes."""
    a = np.asarray(input_img, dtype=np.float64)
    b = np.asarray(edited, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    sa = _selfsim_matrix(a, patch)
    sb = _selfsim_matrix(b, patch)
    return float(np.linalg.norm(sa - sb) / sa.shape[0])


def editability_score(edited: np.ndarray, target_cond: int, classifier: ClassifierParams,
                      mask: np.ndarray) -> tuple:
    """Classifier log-probability of the target class.

    Returned for the whole image and for the mask-cropped image (pixels
    outside the mask zeroed). Higher means more edited toward the target.
    """
    img = np.asarray(edited, dtype=np.float64)
    m = np.asarray(mask, dtype=bool)
    if img.shape != m.shape:
        raise ValueError(f"shape mismatch: {img.shape} vs {m.shape}")
    eps = 1e-300  # classifier probabilities can underflow far off-distribution
    p_whole = classify(classifier, img)[target_cond]
    p_region = classify(classifier, np.where(m, img, 0.0))[target_cond]
    return float(np.log(max(p_whole, eps))), float(np.log(max(p_region, eps)))


def misalignment_curve(result) -> list:
    """(t, cosine(d_cfg, d_fg)) for every injected step of one edit run."""
    return [
        (t, cosine_similarity(dc, df))
        for t, dc, df in result.direction_pairs()
    ]


def mean_misalignment_curve(results) -> list:
    """Average the per-run cosine curves over many runs, per timestep.

    Returns (t, mean cosine, run count) rows sorted by descending t; every
    run contributes at most one value per timestep.
    """
    sums: dict = {}
    counts: dict = {}
    for result in results:
        for t, value in misalignment_curve(result):
            sums[t] = sums.get(t, 0.0) + value
            counts[t] = counts.get(t, 0) + 1
    return [(t, sums[t] / counts[t], counts[t]) for t in sorted(sums, reverse=True)]
