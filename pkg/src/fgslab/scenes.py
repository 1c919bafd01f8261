"""Procedural 16x16 scene dataset: one bright shape (square, circle, or
cross) in a left or right slot on a dim background, plus per-pixel noise.

Class ids enumerate (shape, slot) pairs. Prototypes are deterministic, so
classes are linearly separable by construction and the noise-free
prototype of each class doubles as a mixture component mean for the
analytic setup.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .arrays import SeededRng

__all__ = [
    "Scene",
    "SHAPES",
    "SLOTS",
    "CLASS_NAMES",
    "N_CLASSES",
    "class_id",
    "class_name",
    "prototype",
    "class_mask",
    "gen_dataset",
]

GRID = 16
BACKGROUND = 0.1
OBJECT = 0.9
PIXEL_NOISE = 0.02

SHAPES = ("square", "circle", "cross")
SLOTS = ("left", "right")
CLASS_NAMES = tuple(f"{shape}-{slot}" for shape in SHAPES for slot in SLOTS)
N_CLASSES = len(CLASS_NAMES)

# 7x7 slot boxes with a one-column gap between them
_BOX_ROWS = slice(4, 11)
_BOX_COLS = {"left": slice(1, 8), "right": slice(9, 16)}


@dataclass(frozen=True)
class Scene:
    image: np.ndarray  # (16, 16) in [0, 1]
    cond_id: int
    mask: np.ndarray  # (16, 16) bool: the object's bounding region


def class_id(shape: str, slot: str) -> int:
    return SHAPES.index(shape) * len(SLOTS) + SLOTS.index(slot)


def class_name(cid: int) -> str:
    return CLASS_NAMES[cid]


def _shape_stamp(shape: str) -> np.ndarray:
    """Boolean 7x7 stamp of the object inside its slot box."""
    stamp = np.zeros((7, 7), dtype=bool)
    if shape == "square":
        stamp[1:6, 1:6] = True
    elif shape == "circle":
        rr, cc = np.mgrid[0:7, 0:7]
        stamp[(rr - 3.0) ** 2 + (cc - 3.0) ** 2 <= 3.2**2] = True
    elif shape == "cross":
        stamp[:, 2:5] = True
        stamp[2:5, :] = True
    else:
        raise ValueError(f"unknown shape {shape!r}")
    return stamp


def prototype(cid: int) -> np.ndarray:
    """Noise-free class image: background plus the object stamp."""
    shape, slot = CLASS_NAMES[cid].split("-")
    img = np.full((GRID, GRID), BACKGROUND)
    box = img[_BOX_ROWS, _BOX_COLS[slot]]
    box[_shape_stamp(shape)] = OBJECT
    return img


def class_mask(cid: int) -> np.ndarray:
    """Bounding region of the class's object: its whole slot box."""
    slot = CLASS_NAMES[cid].split("-")[1]
    mask = np.zeros((GRID, GRID), dtype=bool)
    mask[_BOX_ROWS, _BOX_COLS[slot]] = True
    return mask


def gen_dataset(seed: int, n: int) -> list:
    """n scenes, classes assigned round-robin (balanced within one),
    deterministic for a fixed seed."""
    if n < 1:
        raise ValueError(f"dataset size must be >= 1, got {n}")
    rng = SeededRng(seed, 42)
    scenes = []
    for i in range(n):
        cid = i % N_CLASSES
        img = prototype(cid) + PIXEL_NOISE * rng.standard_normal((GRID, GRID))
        img = np.clip(img, 0.0, 1.0)
        scenes.append(Scene(image=img, cond_id=cid, mask=class_mask(cid)))
    return scenes
