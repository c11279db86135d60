"""Temporal domain adaptation training framework for day-to-night tracking,
with prompt-driven object mining, synthetic paired data, and a one-pass
evaluation harness."""

__version__ = "0.1.0"

from .config import (
    AppConfig,
    DiscriminatorConfig,
    GeneratorConfig,
    MiningConfig,
    SceneConfig,
    TrainingConfig,
    load_config,
)
from .core import BoundingBox, DomainLabel, FrameTensor

__all__ = [
    "AppConfig",
    "BoundingBox",
    "DiscriminatorConfig",
    "DomainLabel",
    "FrameTensor",
    "GeneratorConfig",
    "MiningConfig",
    "SceneConfig",
    "TrainingConfig",
    "load_config",
    "__version__",
]
