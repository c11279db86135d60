"""Dataclass configs and the sectioned key-value config file loader.

Config files use INI syntax with the sections ``[generator]``,
``[discriminator]``, ``[training]``, ``[data]``, ``[mining]``, and
``[scene]``. Every key is optional; omitted keys keep their defaults.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigurationError


@dataclass
class GeneratorConfig:
    context_width: int = 64
    feature_channels: int = 64
    grid_size: int = 8
    frame_size: int = 64
    heads: int = 4

    def validate(self):
        for name in ("context_width", "feature_channels", "grid_size", "frame_size", "heads"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"generator.{name} must be positive")
        if self.frame_size < 16:
            raise ConfigurationError("generator.frame_size must be >= 16")


@dataclass
class DiscriminatorConfig:
    kind: str = "tcd"  # tcd | pd
    heads: int = 4
    token_expansion: int = 4
    shared: bool = True
    gate_activation: str = "sigmoid"  # sigmoid | identity
    feature_separate: bool = False

    def validate(self):
        if self.kind not in ("tcd", "pd"):
            raise ConfigurationError(f"discriminator.kind must be tcd or pd, got {self.kind!r}")
        if self.heads <= 0 or self.token_expansion <= 0:
            raise ConfigurationError("discriminator.heads and token_expansion must be positive")
        if self.gate_activation not in ("sigmoid", "identity"):
            raise ConfigurationError(
                f"discriminator.gate_activation must be sigmoid or identity, got {self.gate_activation!r}"
            )


@dataclass
class TrainingConfig:
    epochs: int = 25
    freeze_backbone_epochs: int = 10
    disc_base_lr: float = 0.005
    gen_base_lr: float = 0.001
    lr_power: float = 0.9
    w_gt: float = 1.0
    w_feat: float = 0.1
    w_ctx: float = 0.1
    seed: int = 0
    batch_pairs: int = 8
    adv_loss: str = "bce"  # bce | lsgan
    adv_on: str = "both"  # target | both
    align_image_features: bool = True
    align_temporal_contexts: bool = True
    d_steps_per_g_step: int = 1

    def validate(self):
        if self.epochs <= 0:
            raise ConfigurationError("training.epochs must be positive")
        if not (0 <= self.freeze_backbone_epochs <= self.epochs):
            raise ConfigurationError("training.freeze_backbone_epochs must lie in [0, epochs]")
        if self.disc_base_lr <= 0 or self.gen_base_lr <= 0:
            raise ConfigurationError("learning rates must be positive")
        if min(self.w_gt, self.w_feat, self.w_ctx) < 0:
            raise ConfigurationError("loss weights must be non-negative")
        if self.adv_loss not in ("bce", "lsgan"):
            raise ConfigurationError(f"training.adv_loss must be bce or lsgan, got {self.adv_loss!r}")
        if self.adv_on not in ("target", "both"):
            raise ConfigurationError(f"training.adv_on must be target or both, got {self.adv_on!r}")
        if self.batch_pairs <= 0 or self.d_steps_per_g_step <= 0:
            raise ConfigurationError("batch_pairs and d_steps_per_g_step must be positive")


@dataclass
class DataConfig:
    root: str = ""
    holdout_pairs: int = 0


@dataclass
class MiningConfig:
    detector: str = "oracle"  # oracle | http
    endpoint: str = ""
    noise_px: float = 0.0
    detector_seed: int = 0
    iou_min: float = 0.3
    max_gap: int = 10
    min_len: int = 16
    z_size: int = 127
    x_size: int = 287
    retries: int = 2
    timeout_s: float = 10.0

    def validate(self):
        if self.detector not in ("oracle", "http"):
            raise ConfigurationError(f"mining.detector must be oracle or http, got {self.detector!r}")
        if self.detector == "http" and not self.endpoint:
            raise ConfigurationError("mining.endpoint is required when detector = http")
        if not (0 <= self.iou_min <= 1):
            raise ConfigurationError("mining.iou_min must lie in [0, 1]")
        if self.max_gap < 0 or self.min_len < 1:
            raise ConfigurationError("mining.max_gap must be >= 0 and min_len >= 1")
        if self.z_size <= 0 or self.x_size <= 0:
            raise ConfigurationError("patch sizes must be positive")


@dataclass
class SceneConfig:
    image_size: int = 64
    num_objects: int = 3  # upper bound; each scene plants 1..num_objects
    min_object_size: int = 8
    max_object_size: int = 16
    max_speed: float = 2.0
    gamma: float = 2.2
    brightness: float = 0.4
    noise_sigma: float = 0.03
    length: int = 8

    def validate(self):
        if self.image_size < 16:
            raise ConfigurationError("scene.image_size must be >= 16")
        if not (1 <= self.min_object_size <= self.max_object_size):
            raise ConfigurationError("scene object sizes must satisfy 1 <= min <= max")
        if self.max_object_size > self.image_size // 2:
            raise ConfigurationError("scene objects must fit well inside the frame")
        if self.num_objects < 1:
            raise ConfigurationError("scene.num_objects must be >= 1")
        if self.gamma < 1.0:
            raise ConfigurationError("scene.gamma must be >= 1")
        if not (0.0 < self.brightness <= 1.0):
            raise ConfigurationError("scene.brightness must lie in (0, 1]")
        if self.noise_sigma < 0:
            raise ConfigurationError("scene.noise_sigma must be >= 0")
        if self.length < 3:
            raise ConfigurationError("scene.length must be >= 3")


@dataclass
class AppConfig:
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    data: DataConfig = field(default_factory=DataConfig)
    mining: MiningConfig = field(default_factory=MiningConfig)
    scene: SceneConfig = field(default_factory=SceneConfig)

    def validate(self):
        self.generator.validate()
        self.discriminator.validate()
        self.training.validate()
        self.mining.validate()
        self.scene.validate()


_SECTIONS = {
    "generator": GeneratorConfig,
    "discriminator": DiscriminatorConfig,
    "training": TrainingConfig,
    "data": DataConfig,
    "mining": MiningConfig,
    "scene": SceneConfig,
}


def _coerce(raw: str, target_type: type):
    if target_type is bool:
        lowered = raw.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ConfigurationError(f"cannot parse boolean from {raw!r}")
    try:
        return target_type(raw)
    except ValueError as exc:
        raise ConfigurationError(f"cannot parse {target_type.__name__} from {raw!r}") from exc


def load_config(path: str | Path | None = None) -> AppConfig:
    """Read a sectioned key-value file into an AppConfig, or defaults if None."""
    cfg = AppConfig()
    if path is None:
        cfg.validate()
        return cfg
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config file {path}: {exc}") from exc
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigurationError(f"unknown config section [{section}]")
        target = getattr(cfg, section)
        fields = {f.name: f.type for f in dataclasses.fields(target)}
        for key, raw in parser.items(section):
            if key not in fields:
                raise ConfigurationError(f"unknown key {key!r} in section [{section}]")
            current = getattr(target, key)
            setattr(target, key, _coerce(raw, type(current)))
    cfg.validate()
    return cfg


def dump_config(cfg: AppConfig) -> str:
    """Serialize an AppConfig back to the sectioned key-value format."""
    lines = []
    for section in _SECTIONS:
        lines.append(f"[{section}]")
        target = getattr(cfg, section)
        for f in dataclasses.fields(target):
            value = getattr(target, f.name)
            if isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{f.name} = {value}")
        lines.append("")
    return "\n".join(lines)
