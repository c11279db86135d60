"""Multi-head scaled-dot-product cross attention used by the generator's
temporal conditioning block and by the discriminator."""

from __future__ import annotations

import math

import torch
from torch import nn

from .errors import ConfigurationError, ShapeError


class MultiheadCrossAttention(nn.Module):
    """Projects queries from one token set and keys/values from another.

    ``dim`` must be divisible by ``heads``. Keys and values may live in a
    different channel width ``kv_dim``; they are projected into ``dim``.
    """

    def __init__(self, dim: int, heads: int = 4, kv_dim: int | None = None):
        super().__init__()
        if dim % heads != 0:
            raise ConfigurationError(f"dim {dim} not divisible by heads {heads}")
        kv_dim = dim if kv_dim is None else kv_dim
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads
        self.q_proj = nn.Linear(dim, dim)
        self.k_proj = nn.Linear(kv_dim, dim)
        self.v_proj = nn.Linear(kv_dim, dim)
        self.out_proj = nn.Linear(dim, dim)

    def forward(self, query_tokens: torch.Tensor, key_tokens: torch.Tensor) -> torch.Tensor:
        if query_tokens.ndim != 3 or key_tokens.ndim != 3:
            raise ShapeError("attention inputs must be (B, L, D)")
        if query_tokens.shape[0] != key_tokens.shape[0]:
            raise ShapeError("attention inputs must share the batch dimension")
        b, lq, _ = query_tokens.shape
        lk = key_tokens.shape[1]
        q = self.q_proj(query_tokens).view(b, lq, self.heads, self.head_dim).transpose(1, 2)
        k = self.k_proj(key_tokens).view(b, lk, self.heads, self.head_dim).transpose(1, 2)
        v = self.v_proj(key_tokens).view(b, lk, self.heads, self.head_dim).transpose(1, 2)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        weights = torch.softmax(scores, dim=-1)
        mixed = (weights @ v).transpose(1, 2).reshape(b, lq, self.dim)
        return self.out_proj(mixed)
