"""Domain discriminators over temporal context rows and image features.

The temporal-consistent discriminator walks consecutive contexts with a
cross-attention block, refines the shared representation with a
channel-gating adaptor driven by the difference of consecutive steps, and
classifies each refined step; the carried representation makes successive
domain verdicts coherent. A stateless per-item Transformer discriminator
is included as the ablation baseline.

Context rows arrive as (C,) memory vectors and are lifted to (L, C) token
grids by a learned linear expansion so the token-axis convolution in the
adaptor has spatial extent. Image feature maps are pooled and projected
into the same (L, C) space.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import torch
from torch import nn

from .attention import MultiheadCrossAttention
from .config import DiscriminatorConfig
from .core import DomainLabel
from .errors import ContractError, ShapeError


class Stage(enum.Enum):
    ATTENDED = "attended"
    REFINED = "refined"


@dataclass(frozen=True)
class CommonFeature:
    """A shared-representation token grid at some point of the chain."""

    values: torch.Tensor  # (L, C) or (B, L, C)
    stage: Stage


@dataclass(frozen=True)
class ContextSequence:
    """Ordered context rows of one sequence plus its domain label."""

    rows: torch.Tensor  # (k, C)
    domain: DomainLabel

    def __post_init__(self):
        if self.rows.ndim != 2:
            raise ShapeError(f"context rows must be (k, C), got {tuple(self.rows.shape)}")
        if self.rows.shape[0] < 2:
            raise ContractError("at least 2 context rows are required")


@dataclass(frozen=True)
class DomainLogitSeries:
    """Per-step domain logits; the final entry is the image-feature step."""

    logits: torch.Tensor  # (n,)

    @property
    def context_logits(self) -> torch.Tensor:
        return self.logits[:-1]

    @property
    def feature_logit(self) -> torch.Tensor:
        return self.logits[-1]

    def __len__(self) -> int:
        return self.logits.shape[0]


def _values(x) -> torch.Tensor:
    return x.values if isinstance(x, CommonFeature) else x


def _batched(x: torch.Tensor) -> tuple[torch.Tensor, bool]:
    if x.ndim == 2:
        return x.unsqueeze(0), False
    if x.ndim == 3:
        return x, True
    raise ShapeError(f"expected (L, C) or (B, L, C), got {tuple(x.shape)}")


class CrossAttentionBlock(nn.Module):
    """Shared-feature extraction across two consecutive steps.

    Queries come from the concatenation of the previous and current token
    grids, keys and values from the current one; the attention output at
    the current positions is added residually and layer-normalized.
    """

    def __init__(self, dim: int, heads: int = 4):
        super().__init__()
        self.attn = MultiheadCrossAttention(dim, heads=heads)
        self.norm = nn.LayerNorm(dim)

    def forward(self, prev: torch.Tensor, cur: torch.Tensor) -> torch.Tensor:
        if prev.shape != cur.shape:
            raise ShapeError(f"mismatched token grids: {tuple(prev.shape)} vs {tuple(cur.shape)}")
        n_cur = cur.shape[-2]
        query = torch.cat([prev, cur], dim=-2)
        mixed = self.attn(query, cur)[..., n_cur:, :]
        return self.norm(cur + mixed)


class TemporalConsistencyAdaptor(nn.Module):
    """Channel gate from the difference descriptor of consecutive steps.

    Concatenates the two token grids along channels, applies a depthwise
    separable convolution along the token axis, pools tokens, and gates the
    current grid per channel with the feed-forward output.
    """

    def __init__(self, dim: int, gate_activation: str = "sigmoid"):
        super().__init__()
        self.depthwise = nn.Conv1d(2 * dim, 2 * dim, kernel_size=3, padding=1, groups=2 * dim)
        self.pointwise = nn.Conv1d(2 * dim, dim, kernel_size=1)
        self.ffn = nn.Sequential(nn.Linear(dim, dim), nn.ReLU(), nn.Linear(dim, dim))
        if gate_activation not in ("sigmoid", "identity"):
            raise ContractError(f"unknown gate activation {gate_activation!r}")
        self.gate_activation = gate_activation

    def gate(self, prev: torch.Tensor, cur: torch.Tensor) -> torch.Tensor:
        if prev.shape != cur.shape:
            raise ShapeError(f"mismatched token grids: {tuple(prev.shape)} vs {tuple(cur.shape)}")
        pair = torch.cat([prev, cur], dim=-1).transpose(-1, -2)
        descriptor = self.pointwise(self.depthwise(pair)).mean(dim=-1)
        raw = self.ffn(descriptor)
        return torch.sigmoid(raw) if self.gate_activation == "sigmoid" else raw

    def forward(self, prev: torch.Tensor, cur: torch.Tensor) -> torch.Tensor:
        return cur * self.gate(prev, cur).unsqueeze(-2)


class TokenMeanClassifier(nn.Module):
    """Affine map from the token-averaged feature to one domain logit."""

    def __init__(self, dim: int):
        super().__init__()
        self.linear = nn.Linear(dim, 1)

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        return self.linear(tokens.mean(dim=-2)).squeeze(-1)


class ContextLift(nn.Module):
    """Learned expansion of a (C,) context row into an (L, C) token grid."""

    def __init__(self, context_width: int, tokens: int):
        super().__init__()
        self.tokens = tokens
        self.context_width = context_width
        self.linear = nn.Linear(context_width, tokens * context_width)

    def forward(self, rows: torch.Tensor) -> torch.Tensor:
        if rows.shape[-1] != self.context_width:
            raise ShapeError(f"expected rows of width {self.context_width}, got {rows.shape[-1]}")
        return self.linear(rows).view(*rows.shape[:-1], self.tokens, self.context_width)


class FeatureAdapter(nn.Module):
    """Projects a (C_f, g, g) feature map into the (L, C) token space."""

    def __init__(self, feature_channels: int, context_width: int, tokens: int):
        super().__init__()
        self.tokens = tokens
        self.context_width = context_width
        self.feature_channels = feature_channels
        self.linear = nn.Linear(feature_channels, tokens * context_width)

    def forward(self, feature: torch.Tensor) -> torch.Tensor:
        if feature.ndim == 3:
            feature = feature.unsqueeze(0)
        if feature.ndim != 4 or feature.shape[1] != self.feature_channels:
            raise ShapeError(
                f"expected (B, {self.feature_channels}, g, g), got {tuple(feature.shape)}"
            )
        pooled = feature.mean(dim=(-2, -1))
        return self.linear(pooled).view(-1, self.tokens, self.context_width)


class TemporalConsistentDiscriminator(nn.Module):
    """Progressive chain over context rows with a final image-feature step.

    At step i the carried representation and the lifted context are fused
    by cross attention, refined by the adaptor, classified, and the refined
    grid becomes the new carry (the first context initializes the carry).
    The image feature joins as the final chain step by default, or is
    classified directly when ``feature_separate`` is set.
    """

    def __init__(
        self,
        cfg: DiscriminatorConfig | None = None,
        context_width: int = 64,
        feature_channels: int = 64,
        seed: int | None = None,
    ):
        super().__init__()
        self.cfg = cfg or DiscriminatorConfig()
        self.cfg.validate()
        if seed is not None:
            torch.manual_seed(seed)
        dim = context_width
        self.lift = ContextLift(dim, self.cfg.token_expansion)
        self.feature_adapter = FeatureAdapter(feature_channels, dim, self.cfg.token_expansion)
        self.cross = CrossAttentionBlock(dim, heads=self.cfg.heads)
        self.adaptor = TemporalConsistencyAdaptor(dim, gate_activation=self.cfg.gate_activation)
        self.classifier = TokenMeanClassifier(dim)
        self.feature_classifier = self.classifier if self.cfg.shared else TokenMeanClassifier(dim)

    # -- single-sample contract operations --

    def cross_attend(self, prev, cur) -> CommonFeature:
        prev_v, _ = _batched(_values(prev))
        cur_v, was_batched = _batched(_values(cur))
        out = self.cross(prev_v, cur_v)
        return CommonFeature(out if was_batched else out.squeeze(0), Stage.ATTENDED)

    def tc_adapt(self, prev, cur) -> CommonFeature:
        if isinstance(cur, CommonFeature) and cur.stage is not Stage.ATTENDED:
            raise ContractError("tc_adapt expects an attended current feature")
        prev_v, _ = _batched(_values(prev))
        cur_v, was_batched = _batched(_values(cur))
        out = self.adaptor(prev_v, cur_v)
        return CommonFeature(out if was_batched else out.squeeze(0), Stage.REFINED)

    def classify(self, common) -> torch.Tensor:
        if isinstance(common, CommonFeature) and common.stage is not Stage.REFINED:
            raise ContractError("classify expects a refined feature")
        values, was_batched = _batched(_values(common))
        logit = self.classifier(values)
        return logit if was_batched else logit.squeeze(0)

    def discriminate_sequence(self, contexts, final_feature) -> DomainLogitSeries:
        """One logit per chain step for a single sequence.

        ``contexts`` is a ContextSequence or a (k, C) row tensor with
        k >= 2; ``final_feature`` is the last frame's (C_f, g, g) map.
        Emits k logits: k - 1 context steps plus one feature step.
        """
        rows = contexts.rows if isinstance(contexts, ContextSequence) else contexts
        if rows.ndim != 2:
            raise ShapeError(f"expected (k, C) context rows, got {tuple(rows.shape)}")
        if rows.shape[0] < 2:
            raise ContractError("discriminate_sequence needs at least 2 contexts")
        feature = _values(final_feature)
        if hasattr(final_feature, "values") and not isinstance(final_feature, CommonFeature):
            feature = final_feature.values
        logits = self.sequence_logits(rows.unsqueeze(0), feature.unsqueeze(0))
        return DomainLogitSeries(logits[0])

    # -- batched path used by the trainer --

    def sequence_logits(self, rows: torch.Tensor, features: torch.Tensor) -> torch.Tensor:
        """(B, k, C) rows and (B, C_f, g, g) features to (B, k) logits."""
        if rows.ndim != 3:
            raise ShapeError(f"expected (B, k, C) context rows, got {tuple(rows.shape)}")
        if rows.shape[1] < 2:
            raise ContractError("the progressive chain needs at least 2 contexts")
        lifted = self.lift(rows)
        carry = lifted[:, 0]
        logits = []
        for i in range(1, rows.shape[1]):
            attended = self.cross(carry, lifted[:, i])
            refined = self.adaptor(carry, attended)
            logits.append(self.classifier(refined))
            carry = refined
        feature_tokens = self.feature_adapter(features)
        if self.cfg.feature_separate:
            logits.append(self.feature_classifier(feature_tokens))
        else:
            attended = self.cross(carry, feature_tokens)
            refined = self.adaptor(carry, attended)
            logits.append(self.feature_classifier(refined))
        return torch.stack(logits, dim=1)


class PlainDiscriminator(nn.Module):
    """Stateless per-item discriminator: one Transformer encoder block over
    the token grid followed by a token-mean linear classifier."""

    def __init__(
        self,
        cfg: DiscriminatorConfig | None = None,
        context_width: int = 64,
        feature_channels: int = 64,
        seed: int | None = None,
    ):
        super().__init__()
        self.cfg = cfg or DiscriminatorConfig()
        if seed is not None:
            torch.manual_seed(seed)
        dim = context_width
        self.lift = ContextLift(dim, self.cfg.token_expansion)
        self.feature_adapter = FeatureAdapter(feature_channels, dim, self.cfg.token_expansion)
        self.attn = MultiheadCrossAttention(dim, heads=self.cfg.heads)
        self.norm1 = nn.LayerNorm(dim)
        self.norm2 = nn.LayerNorm(dim)
        self.ffn = nn.Sequential(nn.Linear(dim, 2 * dim), nn.ReLU(), nn.Linear(2 * dim, dim))
        self.classifier = TokenMeanClassifier(dim)
        self.feature_classifier = self.classifier if self.cfg.shared else TokenMeanClassifier(dim)

    def encode(self, tokens: torch.Tensor) -> torch.Tensor:
        tokens = self.norm1(tokens + self.attn(tokens, tokens))
        return self.norm2(tokens + self.ffn(tokens))

    def plain_discriminate(self, item: torch.Tensor) -> torch.Tensor:
        """Per-input logit; accepts a (C,) context row, an (L, C) token
        grid, or a (C_f, g, g) feature map."""
        if item.ndim == 1:
            tokens = self.lift(item.unsqueeze(0))
        elif item.ndim == 2:
            tokens = item.unsqueeze(0)
        elif item.ndim == 3 and item.shape[0] == self.feature_adapter.feature_channels:
            tokens = self.feature_adapter(item)
        else:
            tokens, _ = _batched(item)
        return self.classifier(self.encode(tokens)).squeeze(0)

    def sequence_logits(self, rows: torch.Tensor, features: torch.Tensor) -> torch.Tensor:
        """(B, k, C) rows and (B, C_f, g, g) features to (B, k + 1) logits,
        one per context row plus one for the feature, each scored
        independently."""
        if rows.ndim != 3:
            raise ShapeError(f"expected (B, k, C) context rows, got {tuple(rows.shape)}")
        b, k, _ = rows.shape
        lifted = self.lift(rows.reshape(b * k, -1))
        ctx_logits = self.classifier(self.encode(lifted)).view(b, k)
        feature_tokens = self.feature_adapter(features)
        feat_logits = self.feature_classifier(self.encode(feature_tokens)).view(b, 1)
        return torch.cat([ctx_logits, feat_logits], dim=1)


def build_discriminator(
    cfg: DiscriminatorConfig,
    context_width: int,
    feature_channels: int,
    seed: int | None = None,
):
    cls = TemporalConsistentDiscriminator if cfg.kind == "tcd" else PlainDiscriminator
    return cls(cfg, context_width=context_width, feature_channels=feature_channels, seed=seed)
