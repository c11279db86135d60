"""Adversarial domain losses and the polynomial learning-rate schedule."""

from __future__ import annotations

from typing import Sequence

import torch
from torch.nn import functional as F

from .core import DomainLabel
from .discriminator import DomainLogitSeries
from .errors import ContractError


def _step_loss(logits: torch.Tensor, target: float, kind: str) -> torch.Tensor:
    targets = torch.full_like(logits, target)
    if kind == "bce":
        return F.binary_cross_entropy_with_logits(logits, targets, reduction="none")
    if kind == "lsgan":
        return (logits - targets) ** 2
    raise ContractError(f"unknown adversarial loss kind {kind!r}")


def discriminator_loss(
    series: Sequence[DomainLogitSeries],
    labels: Sequence[DomainLabel],
    kind: str = "bce",
    use_features: bool = True,
    use_contexts: bool = True,
) -> torch.Tensor:
    """Mean per-step classification loss against the true domain labels."""
    if len(series) == 0:
        raise ContractError("discriminator_loss needs at least one sample")
    if len(series) != len(labels):
        raise ContractError("one label per logit series is required")
    terms = []
    for s, label in zip(series, labels):
        if use_contexts and len(s) > 1:
            terms.append(_step_loss(s.context_logits, label.target, kind))
        if use_features:
            terms.append(_step_loss(s.feature_logit.view(1), label.target, kind))
    if not terms:
        raise ContractError("no active loss terms; enable features or contexts")
    return torch.cat(terms).mean()


def generator_loss(
    series: Sequence[DomainLogitSeries],
    labels: Sequence[DomainLabel],
    l_gt: torch.Tensor | float,
    w_gt: float = 1.0,
    w_feat: float = 0.1,
    w_ctx: float = 0.1,
    kind: str = "bce",
    use_features: bool = True,
    use_contexts: bool = True,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Supervised loss plus deception terms against flipped domain labels.

    Returns ``(total, feature_term, context_term)`` where the total is
    ``w_gt * l_gt + w_feat * feature_term + w_ctx * context_term``.
    """
    if len(series) == 0:
        raise ContractError("generator_loss needs at least one sample")
    if len(series) != len(labels):
        raise ContractError("one label per logit series is required")
    l_gt = torch.as_tensor(l_gt, dtype=series[0].logits.dtype)
    feat_terms, ctx_terms = [], []
    for s, label in zip(series, labels):
        if use_features:
            feat_terms.append(_step_loss(s.feature_logit.view(1), label.flipped_target, kind))
        if use_contexts and len(s) > 1:
            ctx_terms.append(_step_loss(s.context_logits, label.flipped_target, kind))
    zero = torch.zeros((), dtype=l_gt.dtype)
    feature_term = torch.cat(feat_terms).mean() if feat_terms else zero
    context_term = torch.cat(ctx_terms).mean() if ctx_terms else zero
    total = w_gt * l_gt + w_feat * feature_term + w_ctx * context_term
    return total, feature_term, context_term


def poly_lr(step: int, total_steps: int, base_lr: float, power: float) -> float:
    """``base_lr * (1 - step / total_steps) ** power``."""
    if total_steps <= 0:
        raise ContractError(f"total_steps must be positive, got {total_steps}")
    if not (0 <= step <= total_steps):
        raise ContractError(f"step {step} outside [0, {total_steps}]")
    return base_lr * (1.0 - step / total_steps) ** power
