"""Temporal feature enhancement: windowed local attention followed by a similarity GCN."""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn

EPS = 1e-8


def sinusoidal_positions(T: int, d: int, dtype=torch.float32) -> torch.Tensor:
    pos = torch.arange(T, dtype=torch.float64)[:, None]
    i = torch.arange(0, d, 2, dtype=torch.float64)
    freq = torch.exp(-math.log(10000.0) * i / d)
    table = torch.zeros(T, d, dtype=torch.float64)
    table[:, 0::2] = torch.sin(pos * freq)
    table[:, 1::2] = torch.cos(pos * freq)[:, : d // 2]
    return table.to(dtype)


class MultiHeadSelfAttention(nn.Module):
    def __init__(self, d: int, heads: int = 4):
        super().__init__()
        if d % heads:
            raise ValueError(f"d={d} is not divisible by heads={heads}")
        self.heads = heads
        self.q = nn.Linear(d, d)
        self.k = nn.Linear(d, d)
        self.v = nn.Linear(d, d)
        self.out = nn.Linear(d, d)

    def forward(self, x, key_mask=None):
        # x: (B, L, d); key_mask: (B, L) bool, True = real position
        B, L, d = x.shape
        h, dh = self.heads, d // self.heads
        q = self.q(x).view(B, L, h, dh).transpose(1, 2)
        k = self.k(x).view(B, L, h, dh).transpose(1, 2)
        v = self.v(x).view(B, L, h, dh).transpose(1, 2)
        logits = q @ k.transpose(-1, -2) / math.sqrt(dh)
        if key_mask is not None:
            logits = logits.masked_fill(~key_mask[:, None, None, :], float("-inf"))
        attn = torch.softmax(logits, dim=-1)
        ctx = (attn @ v).transpose(1, 2).reshape(B, L, d)
        return self.out(ctx)


class TransformerBlock(nn.Module):
    """Pre-norm block: self-attention and a GELU feed-forward, both residual."""

    def __init__(self, d: int, heads: int = 4, expansion: int = 4):
        super().__init__()
        self.norm1 = nn.LayerNorm(d)
        self.attn = MultiHeadSelfAttention(d, heads)
        self.norm2 = nn.LayerNorm(d)
        self.ff = nn.Sequential(nn.Linear(d, expansion * d), nn.GELU(), nn.Linear(expansion * d, d))

    def forward(self, x, key_mask=None):
        x = x + self.attn(self.norm1(x), key_mask)
        return x + self.ff(self.norm2(x))


def window_attention(x: torch.Tensor, block: TransformerBlock, window_len: int) -> torch.Tensor:
    """Apply ``block`` independently on non-overlapping windows of a T x d sequence."""
    if window_len < 1:
        raise ValueError("window_len must be >= 1")
    if not torch.isfinite(x).all():
        raise ValueError("non-finite input features")
    T, d = x.shape
    x = x + sinusoidal_positions(T, d, x.dtype)
    n_win = -(-T // window_len)
    pad = n_win * window_len - T
    xp = F.pad(x, (0, 0, 0, pad))
    mask = torch.arange(n_win * window_len) < T
    out = block(xp.view(n_win, window_len, d), mask.view(n_win, window_len))
    return out.reshape(n_win * window_len, d)[:T]


def similarity_adjacency(x: torch.Tensor) -> torch.Tensor:
    """Row-softmax of the cosine-similarity matrix of the rows of ``x``."""
    unit = x / (x.norm(dim=-1, keepdim=True) + EPS)
    return torch.softmax(unit @ unit.T, dim=-1)


def gcn_layer(x: torch.Tensor, adj: torch.Tensor, weight: torch.Tensor) -> torch.Tensor:
    return F.gelu(adj @ x @ weight)


class TemporalEncoder(nn.Module):
    def __init__(self, d: int, window_len: int = 64, heads: int = 4):
        super().__init__()
        self.window_len = window_len
        self.block = TransformerBlock(d, heads)
        self.gcn_weight = nn.Parameter(torch.empty(d, d))

    def forward(self, x):
        x_l = window_attention(x, self.block, self.window_len)
        return gcn_layer(x_l, similarity_adjacency(x_l), self.gcn_weight)
