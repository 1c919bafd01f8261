"""Persistence: the FGS1 checkpoint container, P5 graymap export,
deterministic SVG plots, and CSV writing.

Checkpoint layout: the 4 magic bytes "FGS1", an ASCII header of
"key = value" lines including one "tensor <name> <dims>" line per tensor
(dims like "16x16", or "scalar"), a terminating "---" line, then the raw
payloads: little-endian float32, row-major, concatenated in header order.
Re-saving the same data is byte-identical.
"""

from __future__ import annotations

import csv
import io
import re
from pathlib import Path

import numpy as np

__all__ = [
    "save_checkpoint",
    "load_checkpoint",
    "CheckpointError",
    "export_pgm",
    "export_svg_plot",
    "write_csv",
    "format_float",
]

MAGIC = b"FGS1"
VERSION = 1
_NAME_RE = re.compile(r"^[A-Za-z0-9_.-]+$")


class CheckpointError(ValueError):
    pass


def _shape_str(shape: tuple) -> str:
    return "scalar" if shape == () else "x".join(str(s) for s in shape)


def _parse_shape(text: str) -> tuple:
    if text == "scalar":
        return ()
    try:
        return tuple(int(p) for p in text.split("x"))
    except ValueError as exc:
        raise CheckpointError(f"bad tensor shape {text!r}") from exc


def save_checkpoint(path, tensors: dict, metadata: dict | None = None) -> None:
    """Write named tensors (insertion order) with free-form text metadata."""
    if not tensors:
        raise CheckpointError("checkpoint needs at least one tensor")
    lines = [f"version = {VERSION}"]
    for key, value in (metadata or {}).items():
        key = str(key)
        if not _NAME_RE.match(key) or key in ("version", "tensor"):
            raise CheckpointError(f"bad metadata key {key!r}")
        value = str(value)
        if "\n" in value:
            raise CheckpointError("metadata values must be single-line")
        lines.append(f"{key} = {value}")
    payloads = []
    for name, arr in tensors.items():
        if not _NAME_RE.match(str(name)):
            raise CheckpointError(f"bad tensor name {name!r}")
        arr = np.asarray(arr, dtype=np.float64)
        lines.append(f"tensor {name} {_shape_str(arr.shape)}")
        payloads.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    lines.append("---")
    blob = MAGIC + ("\n".join(lines) + "\n").encode("ascii") + b"".join(payloads)
    Path(path).write_bytes(blob)


def load_checkpoint(path):
    """Read a checkpoint; returns (tensors, metadata) with float32 fidelity."""
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise CheckpointError(f"bad magic {blob[:4]!r}, expected {MAGIC!r}")
    end = blob.find(b"\n---\n", 4)
    if end < 0:
        raise CheckpointError("missing header terminator")
    try:
        header = blob[4:end].decode("ascii")
    except UnicodeDecodeError as exc:
        raise CheckpointError("header is not ASCII") from exc
    payload = blob[end + 5:]
    metadata: dict = {}
    declared: list = []
    for line in header.splitlines():
        if line.startswith("tensor "):
            parts = line.split()
            if len(parts) != 3:
                raise CheckpointError(f"bad tensor line {line!r}")
            declared.append((parts[1], _parse_shape(parts[2])))
        else:
            key, sep, value = line.partition(" = ")
            if not sep:
                raise CheckpointError(f"bad metadata line {line!r}")
            metadata[key] = value
    if metadata.get("version") != str(VERSION):
        raise CheckpointError(f"unsupported version {metadata.get('version')!r}")
    total = sum(int(np.prod(shape, dtype=np.int64)) for _, shape in declared)
    if len(payload) != 4 * total:
        raise CheckpointError(
            f"payload holds {len(payload) // 4} elements, header declares {total}"
        )
    tensors: dict = {}
    offset = 0
    for name, shape in declared:
        count = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
        tensors[name] = arr.reshape(shape).astype(np.float64)
        offset += 4 * count
    return tensors, metadata


def export_pgm(grid: np.ndarray, path) -> None:
    """Binary 8-bit graymap (P5). Values must lie in [0, 1]; the byte is
    round-half-up of 255*value (0.5 maps to 128)."""
    arr = np.asarray(grid, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"graymap needs a 2-D grid, got shape {arr.shape}")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("grid values must lie in [0, 1]")
    data = np.floor(arr * 255.0 + 0.5).clip(0, 255).astype(np.uint8)
    h, w = arr.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + data.tobytes())


def format_float(x: float) -> str:
    """Stable 6-significant-digit float formatting for CSV/SVG output."""
    return f"{float(x):.6g}"


def write_csv(path, header: list, rows: list) -> None:
    """CSV with a fixed header; floats printed with 6 significant digits."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([
            format_float(v) if isinstance(v, float) else str(v) for v in row
        ])
    Path(path).write_text(buf.getvalue(), encoding="ascii")


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")
_W, _H = 640, 420
_ML, _MR, _MT, _MB = 64, 16, 28, 48


def export_svg_plot(series: list, path, title: str = "", xlabel: str = "",
                    ylabel: str = "", kind: str = "line") -> None:
    """Minimal deterministic SVG plot.

    series: list of (label, xs, ys). kind is "line" or "scatter".
    Re-exporting the same data produces byte-identical output.
    """
    if not series:
        raise ValueError("cannot plot an empty series list")
    if kind not in ("line", "scatter"):
        raise ValueError(f"unknown plot kind {kind!r}")
    cleaned = []
    for label, xs, ys in series:
        xs = np.asarray(xs, dtype=np.float64)
        ys = np.asarray(ys, dtype=np.float64)
        if xs.size == 0 or xs.shape != ys.shape:
            raise ValueError(f"series {label!r} must have matching nonempty x/y")
        cleaned.append((str(label), xs, ys))
    xmin = min(float(xs.min()) for _, xs, _ in cleaned)
    xmax = max(float(xs.max()) for _, xs, _ in cleaned)
    ymin = min(float(ys.min()) for _, _, ys in cleaned)
    ymax = max(float(ys.max()) for _, _, ys in cleaned)
    if xmax == xmin:
        xmin, xmax = xmin - 1.0, xmax + 1.0
    if ymax == ymin:
        ymin, ymax = ymin - 1.0, ymax + 1.0
    pad_y = 0.05 * (ymax - ymin)
    ymin, ymax = ymin - pad_y, ymax + pad_y

    def sx(x):
        return _ML + (x - xmin) / (xmax - xmin) * (_W - _ML - _MR)

    def sy(y):
        return _H - _MB - (y - ymin) / (ymax - ymin) * (_H - _MT - _MB)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<line x1="{_ML}" y1="{_H - _MB}" x2="{_W - _MR}" y2="{_H - _MB}" stroke="black"/>',
        f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_H - _MB}" stroke="black"/>',
    ]
    for i in range(5):
        fx = xmin + (xmax - xmin) * i / 4
        fy = ymin + (ymax - ymin) * i / 4
        out.append(
            f'<text x="{format_float(sx(fx))}" y="{_H - _MB + 16}" font-size="10" '
            f'text-anchor="middle">{format_float(fx)}</text>'
        )
        out.append(
            f'<text x="{_ML - 6}" y="{format_float(sy(fy) + 3)}" font-size="10" '
            f'text-anchor="end">{format_float(fy)}</text>'
        )
    if title:
        out.append(
            f'<text x="{_W // 2}" y="{_MT - 10}" font-size="13" text-anchor="middle">{title}</text>'
        )
    if xlabel:
        out.append(
            f'<text x="{_W // 2}" y="{_H - 10}" font-size="11" text-anchor="middle">{xlabel}</text>'
        )
    if ylabel:
        out.append(
            f'<text x="14" y="{_H // 2}" font-size="11" text-anchor="middle" '
            f'transform="rotate(-90 14 {_H // 2})">{ylabel}</text>'
        )
    for idx, (label, xs, ys) in enumerate(cleaned):
        color = _PALETTE[idx % len(_PALETTE)]
        if kind == "line":
            points = " ".join(
                f"{format_float(sx(x))},{format_float(sy(y))}" for x, y in zip(xs, ys)
            )
            out.append(f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        else:
            for x, y in zip(xs, ys):
                out.append(
                    f'<circle cx="{format_float(sx(x))}" cy="{format_float(sy(y))}" '
                    f'r="2.5" fill="{color}"/>'
                )
        out.append(
            f'<text x="{_W - _MR - 6}" y="{_MT + 14 + 14 * idx}" font-size="11" '
            f'text-anchor="end" fill="{color}">{label}</text>'
        )
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n", encoding="ascii")
