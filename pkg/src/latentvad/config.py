"""Configuration for the world, the model stack, training, and scoring.

Config files are TOML with dotted keys (``world.num_scenes = 2``); CLI
overrides use the same dotted paths and take precedence over the file,
which takes precedence over the built-in defaults.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover - py310 path
    import tomli as tomllib


@dataclass
class SceneSpec:
    texture: str
    allowed: list[int]


def _default_scenes(num_scenes: int) -> list[SceneSpec]:
    """Behavior 0 is allowed everywhere; 1 only in even scenes, 2 only in odd."""
    textures = ["checker", "stripes", "dots", "rings"]
    scenes = []
    for sid in range(num_scenes):
        extra = 1 if sid % 2 == 0 else 2
        scenes.append(SceneSpec(texture=textures[sid % len(textures)], allowed=[0, extra]))
    return scenes


@dataclass
class WorldConfig:
    num_scenes: int = 2
    scenes: list[SceneSpec] = field(default_factory=lambda: _default_scenes(2))
    actors_per_video: int = 1
    train_videos: int = 20
    test_videos: int = 44
    video_length: int = 24
    frame_size: tuple[int, int] = (64, 64)
    joints: int = 8
    pose_channels: int = 2
    rgb_channels: int = 3
    anomaly_rates: dict[str, float] = field(
        default_factory=lambda: {"motion": 0.25, "appearance": 0.25, "scene_mismatch": 0.25}
    )
    train_anomaly_rates: dict[str, float] = field(default_factory=dict)
    seed: int = 0

    def validate(self) -> None:
        h, w = self.frame_size
        if h % 8 or w % 8:
            raise ValueError(f"frame size {self.frame_size} must be divisible by 8")
        if self.video_length % 2:
            raise ValueError("video_length must be even")
        if self.num_scenes < 1:
            raise ValueError("need at least one scene")
        if len(self.scenes) != self.num_scenes:
            raise ValueError("scenes list must have num_scenes entries")
        for name, rate in self.anomaly_rates.items():
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"anomaly rate {name}={rate} outside [0, 1]")
        if sum(self.anomaly_rates.values()) > 1.0 + 1e-9:
            raise ValueError("anomaly rates sum above 1; videos get at most one event")


@dataclass
class ModelConfig:
    clip_len: int = 8            # frames per clip (T), must be even
    token_dim: int = 128         # embedding width of one space-time cube
    depth: int = 4
    heads: int = 4
    behavior_dim: int = 128      # width of encoder outputs e_b
    appearance_dim: int = 64     # width of distilled appearance latents
    scene_dim: int = 64          # width of scene features e_s
    lsta_blocks: int = 2
    lsta_kernel: int = 21
    lsta_dilation: int = 3
    mask_ratio: float = 0.5
    flow_steps: int = 8
    flow_hidden: int = 16
    slots_behavior: int = 20
    slots_scene: int = 10
    slots_match: int = 20

    def validate(self) -> None:
        if self.clip_len % 2:
            raise ValueError("clip_len must be even")
        if self.lsta_kernel % self.lsta_dilation:
            raise ValueError("lsta_kernel must be divisible by lsta_dilation")
        if not 0.0 < self.mask_ratio < 1.0:
            raise ValueError("mask_ratio must lie strictly between 0 and 1")


@dataclass
class TrainConfig:
    alpha: float = 1.0           # weight of the appearance distillation loss
    beta: float = 0.1            # weight of the three separateness losses
    margin: float = 1.0          # separateness hinge margin
    lr: float = 1e-3
    flow_lr: float = 5e-3
    epochs_flow: int = 12
    epochs_joint: int = 20
    batch_size: int = 8
    flow_batch_size: int = 32
    train_stride: int = 4        # clip stride when iterating the train split
    divergence_limit: float = 1e6
    seed: int = 0

    def validate(self) -> None:
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("loss weights must be non-negative")
        if self.margin <= 0:
            raise ValueError("separateness margin must be positive")


@dataclass
class ScoreConfig:
    lam_app: float = 1.0
    lam_mm: float = 0.5
    per_video_minmax: bool = False
    batch_size: int = 16


@dataclass
class PipelineConfig:
    world: WorldConfig = field(default_factory=WorldConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    score: ScoreConfig = field(default_factory=ScoreConfig)

    def validate(self) -> None:
        self.world.validate()
        self.model.validate()
        self.train.validate()

    def resolved(self) -> dict:
        return dataclasses.asdict(self)


def _coerce(value: str, current):
    """Parse a CLI override string against the current value's type."""
    if isinstance(current, bool):
        if value.lower() in ("true", "1", "yes"):
            return True
        if value.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"cannot parse {value!r} as bool")
    if isinstance(current, int):
        return int(value)
    if isinstance(current, float):
        return float(value)
    if isinstance(current, tuple):
        parts = [p for p in value.replace("(", "").replace(")", "").split(",") if p]
        return tuple(type(current[0])(p) for p in parts)
    if isinstance(current, str):
        return value
    raise ValueError(f"cannot override value of type {type(current)!r} from the CLI")


def _apply_one(cfg, dotted: str, value) -> None:
    parts = dotted.split(".")
    target = cfg
    for part in parts[:-1]:
        if isinstance(target, dict):
            target = target[part]
        else:
            target = getattr(target, part)
    leaf = parts[-1]
    if isinstance(target, dict):
        current = target.get(leaf)
        target[leaf] = _coerce(value, current) if isinstance(value, str) else value
    else:
        if not hasattr(target, leaf):
            raise KeyError(f"unknown config key {dotted!r}")
        current = getattr(target, leaf)
        setattr(target, leaf, _coerce(value, current) if isinstance(value, str) else value)


def _merge_table(cfg: PipelineConfig, table: dict, prefix: str = "") -> None:
    for key, value in table.items():
        dotted = f"{prefix}{key}"
        if dotted == "world.scenes":
            cfg.world.scenes = [SceneSpec(**entry) for entry in value]
        elif isinstance(value, dict) and dotted not in ("world.anomaly_rates",):
            _merge_table(cfg, value, prefix=f"{dotted}.")
        elif dotted == "world.anomaly_rates":
            cfg.world.anomaly_rates.update(value)
        elif dotted == "world.frame_size":
            cfg.world.frame_size = tuple(value)
        else:
            _apply_one(cfg, dotted, value)


def load_config(path: str | Path | None = None, overrides: list[str] | None = None) -> PipelineConfig:
    """Build a config from defaults, an optional TOML file, then CLI overrides."""
    cfg = PipelineConfig()
    if path is not None:
        with open(path, "rb") as fh:
            table = tomllib.load(fh)
        _merge_table(cfg, table)
    for item in overrides or []:
        if "=" not in item:
            raise ValueError(f"override {item!r} is not of the form key=value")
        dotted, _, value = item.partition("=")
        _apply_one(cfg, dotted.strip(), value.strip())
    if len(cfg.world.scenes) != cfg.world.num_scenes and cfg.world.scenes == _default_scenes(2):
        cfg.world.scenes = _default_scenes(cfg.world.num_scenes)
    cfg.validate()
    return cfg
