"""Flat key-value experiment configuration.

Grammar: one `section.key = value` per line; `#` starts a comment; blank
lines are ignored. Values are parsed on demand as strings, numbers,
booleans (true/false), comma-separated number lists, or
semicolon-separated vectors of comma-separated numbers.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .diffusion import NoiseSchedule, make_schedule
from .guidance import GuidanceConfig
from .mixture import MixtureModel
from .transfer import PerturbKind

__all__ = ["Config", "DEFAULTS", "load_config", "parse_config"]

DEFAULTS = {
    "schedule.kind": "linear-beta",
    "schedule.steps": "100",
    "guidance.w_cfg": "7.5",
    "guidance.w_fg": "10",
    "guidance.k": "100",
    "guidance.tau": "0.5",
    "guidance.tag": "layout",
    "guidance.schedule_cfg": "true",
    "guidance.schedule_fg": "true",
    "perturb.kind": "blur",
    "perturb.sigma": "5",
    "perturb.scale": "0.1",
    "recon.mode": "replay",
    "dataset.size": "600",
    "dataset.seed": "7",
    "benchmark.scenes": "50",
    "benchmark.seed": "2024",
    "benchmark.bg_sigma": "0.25",
    "benchmark.class_sigma": "0.12",
    "benchmark.bg_weight": "0.02",
    "benchmark.injection_strength": "0.5",
    "benchmark.source_retention": "0.35",
    "sweep.k": "10,50,100,500,1000",
    "sweep.sigma": "1,2,5,10,100",
    "sweep.w_fg": "0,5,10,20,50",
    "train.steps": "2000",
    "train.batch": "16",
    "train.lr": "0.003",
    "train.seed": "0",
}


class Config:
    """Parsed key-value settings layered over the defaults."""

    def __init__(self, values: dict | None = None):
        self.values = dict(DEFAULTS)
        self.values.update(values or {})

    def get(self, key: str, default: str | None = None) -> str:
        if key in self.values:
            return self.values[key]
        if default is None:
            raise KeyError(f"missing config key {key!r}")
        return default

    def get_int(self, key: str) -> int:
        return int(self.get(key))

    def get_float(self, key: str) -> float:
        return float(self.get(key))

    def get_bool(self, key: str) -> bool:
        raw = self.get(key).lower()
        if raw not in ("true", "false"):
            raise ValueError(f"config key {key!r} must be true/false, got {raw!r}")
        return raw == "true"

    def get_floats(self, key: str) -> list:
        return [float(p) for p in self.get(key).split(",") if p.strip()]

    def get_vectors(self, key: str) -> list:
        return [
            [float(p) for p in group.split(",") if p.strip()]
            for group in self.get(key).split(";")
            if group.strip()
        ]

    def schedule(self) -> NoiseSchedule:
        return make_schedule(self.get("schedule.kind"), self.get_int("schedule.steps"))

    def perturb_kind(self) -> PerturbKind:
        kind = self.get("perturb.kind")
        if kind == "blur":
            return PerturbKind.blur(self.get_float("perturb.sigma"))
        if kind == "noise":
            return PerturbKind.noise(self.get_float("perturb.scale"))
        return PerturbKind(kind)

    def guidance(self) -> GuidanceConfig:
        return GuidanceConfig(
            w_cfg=self.get_float("guidance.w_cfg"),
            w_fg=self.get_float("guidance.w_fg"),
            k=self.get_float("guidance.k"),
            tag=self.get("guidance.tag"),
            perturb=self.perturb_kind(),
            tau=self.get_float("guidance.tau"),
            schedule_cfg=self.get_bool("guidance.schedule_cfg"),
            schedule_fg=self.get_bool("guidance.schedule_fg"),
        )

    def mixture(self) -> MixtureModel | None:
        """Explicit mixture from mixture.weights / mixture.means / mixture.vars."""
        if "mixture.means" not in self.values:
            return None
        means = np.asarray(self.get_vectors("mixture.means"))
        weights = np.asarray(self.get_floats("mixture.weights"))
        variances = np.asarray(self.get_floats("mixture.vars"))
        return MixtureModel(weights=weights, means=means, variances=variances)


def parse_config(text: str) -> Config:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key = key.strip()
        if not key or "." not in key:
            raise ValueError(f"config line {lineno}: keys must look like 'section.key'")
        values[key] = value.strip()
    return Config(values)


def load_config(path=None) -> Config:
    if path is None:
        return Config()
    return parse_config(Path(path).read_text(encoding="utf-8"))
