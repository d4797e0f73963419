"""Experiment configuration: a single JSON file plus flag overrides."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .fitting import RansacParams
from .oracles import PERTURB_PRESETS, NoiseSpec, PerturbSpec
from .simulator import CATEGORIES, MotionSpec


@dataclass(frozen=True)
class TrackerConfig:
    aspect_policy: str = "blend"
    aspect_blend: float = 0.9
    use_ransac: bool = False
    ransac: RansacParams = field(default_factory=RansacParams)
    rotation_projection: bool = False
    crop_margin: float = 1.2


@dataclass(frozen=True)
class ExperimentConfig:
    category: str = "laptop"
    trajectories: int = 1
    frames: int = 30
    points_per_frame: int = 384
    points_per_part: int = 192
    seed: int = 0
    out_dir: str = "out"
    init_perturb: PerturbSpec | None = None  # None = category preset
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    motion: MotionSpec = field(default_factory=MotionSpec)

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ConfigError(f"unknown category {self.category!r}; pick one of {CATEGORIES}")
        if self.trajectories < 1 or self.frames < 1:
            raise ConfigError("trajectories and frames must be >= 1")
        if self.points_per_frame < 1 or self.points_per_part < 8:
            raise ConfigError("points_per_frame must be >= 1 and points_per_part >= 8")

    @property
    def perturb(self) -> PerturbSpec:
        if self.init_perturb is not None:
            return self.init_perturb
        return PERTURB_PRESETS[self.category]


def _build(cls, payload: dict, name: str):
    try:
        return cls(**payload)
    except TypeError as exc:
        raise ConfigError(f"bad {name} section: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"bad {name} section: {exc}") from exc


def config_from_dict(payload: dict) -> ExperimentConfig:
    if not isinstance(payload, dict):
        raise ConfigError("config root must be a JSON object")
    data = dict(payload)
    try:
        if "init_perturb" in data and data["init_perturb"] is not None:
            data["init_perturb"] = _build(PerturbSpec, data["init_perturb"], "init_perturb")
        if "noise" in data:
            data["noise"] = _build(NoiseSpec, data["noise"], "noise")
        if "motion" in data:
            data["motion"] = _build(MotionSpec, data["motion"], "motion")
        if "tracker" in data:
            tracker = dict(data["tracker"])
            if "ransac" in tracker:
                tracker["ransac"] = _build(RansacParams, tracker["ransac"], "tracker.ransac")
            data["tracker"] = _build(TrackerConfig, tracker, "tracker")
        return _build(ExperimentConfig, data, "config")
    except (AttributeError, ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if overrides:
        payload.update({k: v for k, v in overrides.items() if v is not None})
    return config_from_dict(payload)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    def plain(obj):
        if isinstance(obj, (PerturbSpec, NoiseSpec, MotionSpec, RansacParams, TrackerConfig)):
            return {k: plain(v) for k, v in vars(obj).items()}
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        return obj

    # out_dir is deliberately omitted: it is run placement, not run content,
    # and manifests should be byte-identical wherever the run lands.
    return {
        "category": cfg.category,
        "trajectories": cfg.trajectories,
        "frames": cfg.frames,
        "points_per_frame": cfg.points_per_frame,
        "points_per_part": cfg.points_per_part,
        "seed": cfg.seed,
        "init_perturb": plain(cfg.perturb),
        "noise": plain(cfg.noise),
        "tracker": plain(cfg.tracker),
        "motion": plain(cfg.motion),
    }
