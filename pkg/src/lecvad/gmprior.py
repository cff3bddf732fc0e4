"""Gaussian-mixture temporal prior used as a local-consistency target for ``s_b``."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

SIGMA_MIN = 0.05


@dataclass
class GaussKernels:
    mu: torch.Tensor  # T x C, in (0, 1)
    sigma: torch.Tensor  # T x C, >= SIGMA_MIN
    beta: float = 0.7


class KernelPredictor(nn.Module):
    """Shared affine map from [text_c ; video_t] (2d) to (raw_mu, raw_sigma)."""

    def __init__(self, d: int, sigma_min: float = SIGMA_MIN):
        super().__init__()
        self.fc = nn.Linear(2 * d, 2)
        self.sigma_min = sigma_min

    def forward(self, f_aug, f_video, beta: float = 0.7) -> GaussKernels:
        text = f_aug[1:]  # anomaly categories only
        T, C = f_video.shape[0], text.shape[0]
        f_m = torch.cat([text[None].expand(T, C, -1), f_video[:, None].expand(T, C, -1)], dim=-1)
        raw = self.fc(f_m)
        mu = torch.sigmoid(raw[..., 0])
        sigma = F.softplus(raw[..., 1]) + self.sigma_min
        return GaussKernels(mu, sigma, beta)


def predict_kernels(f_aug, f_video, predictor: KernelPredictor, beta: float = 0.7) -> GaussKernels:
    return predictor(f_aug, f_video, beta)


def gaussian_masks(kernels: GaussKernels, T: int) -> torch.Tensor:
    """Full masks G_c^t(j) for j = 1..T, shape T x C x T. Only needed for plotting."""
    j = torch.arange(1, T + 1, dtype=kernels.mu.dtype) / T
    diff = j[None, None, :] - kernels.mu[..., None]
    return torch.exp(-kernels.beta * diff**2 / kernels.sigma[..., None] ** 2)


def gmm_scores(kernels: GaussKernels, s_m, T: int) -> torch.Tensor:
    """s_gmm(t) = sum_{c>=1} s_m[t, c] * G_c^t(t), evaluated on the diagonal j = t."""
    pos = torch.arange(1, T + 1, dtype=kernels.mu.dtype)[:, None] / T
    g = torch.exp(-kernels.beta * (pos - kernels.mu) ** 2 / kernels.sigma**2)
    return (s_m[:, 1:] * g).sum(dim=-1)


def gmm_loss(s_gmm, s_b):
    """Euclidean distance between s_gmm and the anomaly column of s_b (or a length-T vector)."""
    target = s_b[:, 1] if s_b.ndim == 2 else s_b
    if s_gmm.shape != target.shape:
        raise ValueError("length mismatch")
    # vector_norm has a zero subgradient at the origin, unlike sqrt(sum(.))
    return torch.linalg.vector_norm(s_gmm - target)
