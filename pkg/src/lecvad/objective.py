"""Top-K MIL pooling and the loss terms."""

from __future__ import annotations

from dataclasses import dataclass

import torch

EPS = 1e-8


def pool_size(T: int) -> int:
    return max(T // 16, 1)


def topk_pool(scores: torch.Tensor, K: int) -> torch.Tensor:
    """Per-column mean of the K largest entries of a T x n score matrix."""
    T = scores.shape[0]
    if not 1 <= K <= T:
        raise ValueError(f"K={K} outside 1..{T}")
    return torch.topk(scores, K, dim=0, sorted=False).values.mean(dim=0)


def agnostic_loss(s_b, y: int, K: int):
    p_b = topk_pool(s_b, K)
    return -torch.log(p_b[int(y)] + EPS)


def aware_loss(s_aware, g: int, K: int):
    pooled = topk_pool(s_aware, K)
    return -torch.log_softmax(pooled, dim=0)[int(g)]


def reg_loss(s_m, s_b):
    return (1.0 - s_m[:, 0] - s_b[:, 1]).abs().mean()


@dataclass
class LossBreakdown:
    l_agnostic: torch.Tensor
    l_aware: torch.Tensor
    l_gmm: torch.Tensor
    l_reg: torch.Tensor
    l_total: torch.Tensor
    lam: float
    gamma: float
    K: int = 0
    p_b: torch.Tensor | None = None
    p_m: torch.Tensor | None = None

    def as_floats(self) -> dict:
        return {k: float(getattr(self, k).detach()) for k in ("l_agnostic", "l_aware", "l_gmm", "l_reg", "l_total")}


def total_loss(l_agnostic, l_aware, l_gmm, l_reg, lam=0.3, gamma=1e-4, **extra) -> LossBreakdown:
    if lam < 0 or gamma < 0:
        raise ValueError("loss weights must be non-negative")
    parts = [torch.as_tensor(v, dtype=torch.float64) if not torch.is_tensor(v) else v
             for v in (l_agnostic, l_aware, l_gmm, l_reg)]
    total = parts[0] + parts[1] + lam * parts[2] + gamma * parts[3]
    return LossBreakdown(*parts, total, lam, gamma, **extra)
