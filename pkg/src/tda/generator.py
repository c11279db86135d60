"""Temporal feature generator and toy tracker head.

Per frame the generator encodes pixels with a three-layer strided
convolutional stack, conditions the resulting token grid on the rows of a
temporal context memory through one cross-attention block (identity when
the memory is empty, i.e. for the first frame), and appends a pooled,
linearly projected summary of the conditioned feature as the new memory
row. The tracker head maps a conditioned feature to a classification logit
map and a 4-channel box regression map for the supervised loss on daytime
samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .attention import MultiheadCrossAttention
from .config import GeneratorConfig
from .core import FrameTensor
from .errors import ConfigurationError, ShapeError


@dataclass(frozen=True)
class TemporalContextMemory:
    """Accumulated per-frame context rows, one per processed frame."""

    rows: torch.Tensor  # (t, C)
    normalized: bool = False

    def __post_init__(self):
        if self.rows.ndim != 2:
            raise ShapeError(f"memory rows must be 2-D, got shape {tuple(self.rows.shape)}")
        if self.rows.numel() and not torch.isfinite(self.rows).all():
            raise ShapeError("memory rows contain non-finite values")

    @property
    def length(self) -> int:
        return self.rows.shape[0]

    @property
    def width(self) -> int:
        return self.rows.shape[1]

    def appended(self, row: torch.Tensor) -> "TemporalContextMemory":
        return TemporalContextMemory(torch.cat([self.rows, row.view(1, -1)]), self.normalized)


@dataclass(frozen=True)
class TemporalFeature:
    """Per-frame conditioned feature map on the generator's output grid."""

    values: torch.Tensor  # (C_f, h, w)
    frame_index: int


@dataclass(frozen=True)
class TrackerOutput:
    classification_map: torch.Tensor  # (h, w) logits
    regression_map: torch.Tensor  # (4, h, w)


def init_memory(context_width: int, dtype: torch.dtype = torch.float32) -> TemporalContextMemory:
    """An empty memory (zero rows) of the given channel width."""
    if context_width <= 0:
        raise ConfigurationError(f"context width must be positive, got {context_width}")
    return TemporalContextMemory(torch.zeros(0, context_width, dtype=dtype))


class TemporalFeatureGenerator(nn.Module):
    def __init__(self, cfg: GeneratorConfig | None = None, seed: int | None = None):
        super().__init__()
        self.cfg = cfg or GeneratorConfig()
        self.cfg.validate()
        if seed is not None:
            torch.manual_seed(seed)
        c_f = self.cfg.feature_channels
        self.encoder = nn.Sequential(
            nn.Conv2d(3, 16, kernel_size=3, stride=2, padding=1),
            nn.ReLU(),
            nn.Conv2d(16, 32, kernel_size=3, stride=2, padding=1),
            nn.ReLU(),
            nn.Conv2d(32, c_f, kernel_size=3, stride=2, padding=1),
            nn.ReLU(),
        )
        self.pool = nn.AdaptiveAvgPool2d(self.cfg.grid_size)
        self.conditioner = MultiheadCrossAttention(
            dim=c_f, heads=self.cfg.heads, kv_dim=self.cfg.context_width
        )
        self.context_proj = nn.Linear(c_f, self.cfg.context_width)

    @property
    def dtype(self) -> torch.dtype:
        return self.context_proj.weight.dtype

    def backbone_parameters(self):
        """The convolutional encoder blocks subject to freezing."""
        return self.encoder.parameters()

    def empty_memory(self) -> TemporalContextMemory:
        return init_memory(self.cfg.context_width, dtype=self.dtype)

    def _check_frame_shape(self, pixels_shape):
        expected = (3, self.cfg.frame_size, self.cfg.frame_size)
        if tuple(pixels_shape[-3:]) != expected:
            raise ShapeError(f"expected frame of shape {expected}, got {tuple(pixels_shape[-3:])}")

    def encode(self, frames: torch.Tensor) -> torch.Tensor:
        """(B, 3, H, W) pixels to (B, G*G, C_f) tokens."""
        self._check_frame_shape(frames.shape)
        grid = self.pool(self.encoder(frames))
        return grid.flatten(2).transpose(1, 2)

    def condition(self, tokens: torch.Tensor, memory_rows: torch.Tensor) -> torch.Tensor:
        """Add cross attention over memory rows; identity for empty memory."""
        if memory_rows.shape[-1] != self.cfg.context_width:
            raise ShapeError(
                f"memory width {memory_rows.shape[-1]} != configured {self.cfg.context_width}"
            )
        if memory_rows.shape[-2] == 0:
            return tokens
        return tokens + self.conditioner(tokens, memory_rows)

    def summarize(self, tokens: torch.Tensor) -> torch.Tensor:
        """Pool conditioned tokens and project to a context row."""
        return self.context_proj(tokens.mean(dim=-2))

    def generate(
        self, frame: FrameTensor, memory: TemporalContextMemory
    ) -> tuple[TemporalFeature, TemporalContextMemory]:
        """Produce the conditioned feature for one frame and grow the memory."""
        pixels = torch.as_tensor(frame.pixels, dtype=self.dtype).unsqueeze(0)
        self._check_frame_shape(pixels.shape)
        tokens = self.encode(pixels)
        conditioned = self.condition(tokens, memory.rows.unsqueeze(0))
        row = self.summarize(conditioned)[0]
        g = self.cfg.grid_size
        feature = conditioned[0].transpose(0, 1).reshape(self.cfg.feature_channels, g, g)
        return TemporalFeature(feature, frame.frame_index), memory.appended(row)

    def forward_sequence(self, frames: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Run a batch of equal-length sequences.

        ``frames`` is (B, T, 3, H, W); returns per-frame conditioned
        features (B, T, C_f, G, G) and context rows (B, T, C).
        """
        if frames.ndim != 5:
            raise ShapeError(f"expected (B, T, 3, H, W), got {tuple(frames.shape)}")
        b, t = frames.shape[:2]
        g = self.cfg.grid_size
        tokens = self.encode(frames.reshape(b * t, *frames.shape[2:]))
        tokens = tokens.view(b, t, g * g, self.cfg.feature_channels)
        features, rows = [], []
        memory = torch.zeros(b, 0, self.cfg.context_width, dtype=tokens.dtype)
        for step in range(t):
            conditioned = self.condition(tokens[:, step], memory)
            row = self.summarize(conditioned)
            memory = torch.cat([memory, row.unsqueeze(1)], dim=1)
            features.append(conditioned.transpose(1, 2).reshape(b, -1, g, g))
            rows.append(row)
        return torch.stack(features, dim=1), torch.stack(rows, dim=1)


class TrackerHead(nn.Module):
    """1x1-conv readout to a classification logit map and a regression map."""

    def __init__(self, feature_channels: int = 64, seed: int | None = None):
        super().__init__()
        if seed is not None:
            torch.manual_seed(seed)
        self.cls_conv = nn.Conv2d(feature_channels, 1, kernel_size=1)
        self.reg_conv = nn.Conv2d(feature_channels, 4, kernel_size=1)
        self.feature_channels = feature_channels

    def forward(self, features: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """(B, C_f, G, G) to logits (B, G, G) and regression (B, 4, G, G)."""
        if features.ndim != 4 or features.shape[1] != self.feature_channels:
            raise ShapeError(
                f"expected (B, {self.feature_channels}, G, G), got {tuple(features.shape)}"
            )
        return self.cls_conv(features).squeeze(1), self.reg_conv(features)

    def track(self, feature: TemporalFeature) -> TrackerOutput:
        cls_map, reg_map = self.forward(feature.values.unsqueeze(0))
        return TrackerOutput(cls_map[0], reg_map[0])


def gaussian_label_map(
    boxes: torch.Tensor, frame_size: int, grid_size: int, dtype: torch.dtype = torch.float32
) -> tuple[torch.Tensor, torch.Tensor]:
    """Soft center labels on the output grid plus the positive-cell mask.

    ``boxes`` is (B, 4) as x, y, w, h in frame pixels. Labels follow a
    Gaussian of scale tied to the box size, peaking at the box center;
    positives are the cells within half a peak of the maximum.
    """
    b = boxes.shape[0]
    stride = frame_size / grid_size
    coords = (torch.arange(grid_size, dtype=dtype) + 0.5) * stride
    py, px = torch.meshgrid(coords, coords, indexing="ij")
    cx = (boxes[:, 0] + boxes[:, 2] / 2.0).view(b, 1, 1)
    cy = (boxes[:, 1] + boxes[:, 3] / 2.0).view(b, 1, 1)
    sigma = (0.5 * torch.sqrt(boxes[:, 2] * boxes[:, 3])).clamp(min=stride / 4.0).view(b, 1, 1)
    d2 = (px.unsqueeze(0) - cx) ** 2 + (py.unsqueeze(0) - cy) ** 2
    labels = torch.exp(-d2 / (2.0 * sigma**2))
    peak = labels.flatten(1).max(dim=1).values.view(b, 1, 1)
    positives = labels >= 0.5 * peak
    return labels, positives


def regression_targets(
    boxes: torch.Tensor, frame_size: int, grid_size: int, dtype: torch.dtype = torch.float32
) -> torch.Tensor:
    """Per-cell normalized distances to the four box sides, shape (B, 4, G, G)."""
    b = boxes.shape[0]
    stride = frame_size / grid_size
    coords = (torch.arange(grid_size, dtype=dtype) + 0.5) * stride
    py, px = torch.meshgrid(coords, coords, indexing="ij")
    px = px.unsqueeze(0)
    py = py.unsqueeze(0)
    x1 = boxes[:, 0].view(b, 1, 1)
    y1 = boxes[:, 1].view(b, 1, 1)
    x2 = (boxes[:, 0] + boxes[:, 2]).view(b, 1, 1)
    y2 = (boxes[:, 1] + boxes[:, 3]).view(b, 1, 1)
    stack = torch.stack([px - x1, py - y1, x2 - px, y2 - py], dim=1)
    return stack / frame_size


def supervised_loss(
    cls_map: torch.Tensor,
    reg_map: torch.Tensor,
    boxes: torch.Tensor,
    frame_size: int,
) -> torch.Tensor:
    """Binary cross-entropy against the Gaussian label map plus smooth-L1
    box regression at positive cells."""
    grid_size = cls_map.shape[-1]
    labels, positives = gaussian_label_map(boxes, frame_size, grid_size, dtype=cls_map.dtype)
    cls_loss = F.binary_cross_entropy_with_logits(cls_map, labels)
    targets = regression_targets(boxes, frame_size, grid_size, dtype=cls_map.dtype)
    mask = positives.unsqueeze(1).expand_as(reg_map)
    reg_loss = F.smooth_l1_loss(reg_map[mask], targets[mask])
    return cls_loss + reg_loss


def frames_to_tensor(frames: np.ndarray, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    return torch.as_tensor(np.ascontiguousarray(frames), dtype=dtype)
