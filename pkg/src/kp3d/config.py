"""Run configuration: defaults, YAML loading, overrides and hashing.

The config file is YAML with exactly the keys of Config; unknown keys are
rejected so typos fail loudly. Every run stamps its outputs with the
config hash and seed for reproducibility.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import yaml

from kp3d.errors import ConfigError

MODES = ("stereo", "mono")


@dataclass
class Config:
    data_dir: str | None = None
    output_dir: str | None = None
    category_file: str | None = None
    mode: str = "stereo"
    seed: int = 0
    # detection / association thresholds
    detection_threshold: float = 0.25
    epipolar_cutoff: float = 32.0
    center_gate_radius: float = 16.0  # output px, keypoint vote to center
    match_reference_depth: float = 0.6  # meters, disparity-shift tie-break
    eval_gate: float = 0.10  # meters, prediction-to-truth matching
    # target map rendering
    sigma: float = 1.0  # heatmap bump bandwidth, output px
    depth_radius: float = 3.0  # depth disk radius, output px
    output_size: int = 64
    # simulation
    fps: float = 14.5
    duration: float = 30.0  # seconds per sequence
    pixel_noise: float = 0.0  # stddev of 2D keypoint noise, full-image px

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        positive = [
            "detection_threshold",
            "epipolar_cutoff",
            "center_gate_radius",
            "match_reference_depth",
            "eval_gate",
            "sigma",
            "depth_radius",
            "output_size",
            "fps",
            "duration",
        ]
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"config key '{name}' must be positive")
        if self.pixel_noise < 0:
            raise ConfigError("config key 'pixel_noise' must be nonnegative")

    @classmethod
    def field_names(cls) -> set[str]:
        return {f.name for f in dataclasses.fields(cls)}

    @classmethod
    def load(cls, path=None, overrides: dict | None = None) -> "Config":
        """Build a config from an optional YAML file plus override values."""
        values: dict = {}
        if path is not None:
            with open(Path(path)) as f:
                doc = yaml.safe_load(f) or {}
            if not isinstance(doc, dict):
                raise ConfigError(f"{path}: expected a YAML mapping")
            unknown = set(doc) - cls.field_names()
            if unknown:
                raise ConfigError(
                    f"{path}: unknown config key(s): {', '.join(sorted(unknown))}"
                )
            values.update(doc)
        for key, value in (overrides or {}).items():
            if key not in cls.field_names():
                raise ConfigError(f"unknown config key '{key}'")
            if value is not None:
                values[key] = value
        try:
            return cls(**values)
        except TypeError as e:
            raise ConfigError(str(e)) from e

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def hash(self) -> str:
        """Stable digest of the full configuration."""
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def stamp(self) -> dict:
        return {"config_hash": self.hash(), "seed": self.seed}
