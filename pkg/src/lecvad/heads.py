"""Category-agnostic and category-aware scoring heads."""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

EPS = 1e-8


@dataclass
class ScoreSet:
    """Per-video forward outputs. Row 0/column 0 always denotes the normal class."""

    s_b: torch.Tensor  # T x 2
    s_m: torch.Tensor  # T x (C+1)
    s_tv: torch.Tensor | None  # T x (C+1), None when the cross-modal branch is off
    s_aware: torch.Tensor  # T x (C+1)
    s_gmm: torch.Tensor | None  # T

    def detach(self) -> "ScoreSet":
        return ScoreSet(*(None if v is None else v.detach() for v in
                          (self.s_b, self.s_m, self.s_tv, self.s_aware, self.s_gmm)))

    def numpy(self) -> dict:
        return {k: None if v is None else v.detach().cpu().double().numpy()
                for k, v in vars(self).items()}


def binary_head(f_video, linear: nn.Linear):
    return torch.softmax(linear(f_video), dim=-1)


def multiclass_head(f_video, linear: nn.Linear):
    return torch.softmax(linear(f_video), dim=-1)


def cross_attention(f_text, f_video, w_q, w_k, w_v):
    """Text rows query the video snippets; returns a (C+1) x d matrix."""
    q = f_text @ w_q
    k = f_video @ w_k
    v = f_video @ w_v
    attn = torch.softmax(q @ k.T / math.sqrt(f_video.shape[-1]), dim=-1)
    return attn @ v


def cosine_align(f_video, f_ctg):
    a = f_video / (f_video.norm(dim=-1, keepdim=True) + EPS)
    b = f_ctg / (f_ctg.norm(dim=-1, keepdim=True) + EPS)
    return a @ b.T


def fuse_aware(s_m, s_tv):
    if s_m.shape != s_tv.shape:
        raise ValueError(f"shape mismatch {tuple(s_m.shape)} vs {tuple(s_tv.shape)}")
    return s_m + s_tv


class CrossModalAttention(nn.Module):
    def __init__(self, d: int):
        super().__init__()
        self.w_q = nn.Parameter(torch.empty(d, d))
        self.w_k = nn.Parameter(torch.empty(d, d))
        self.w_v = nn.Parameter(torch.empty(d, d))

    def forward(self, f_text, f_video):
        return cross_attention(f_text, f_video, self.w_q, self.w_k, self.w_v)
