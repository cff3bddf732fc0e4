"""The full dual-branch network and the per-video loss."""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .encoder import TemporalEncoder
from .gmprior import KernelPredictor, gmm_loss, gmm_scores
from .heads import CrossModalAttention, ScoreSet, binary_head, cosine_align, fuse_aware, multiclass_head
from .membank import MemoryBank
from .objective import LossBreakdown, agnostic_loss, aware_loss, pool_size, reg_loss, topk_pool, total_loss


@dataclass
class Forward:
    scores: ScoreSet
    f_video: torch.Tensor
    f_aug: torch.Tensor | None


class LECVAD(nn.Module):
    """Dual-branch anomaly localizer.

    Toggles:
        use_vob: include the vision-only multiclass scores ``s_m`` in ``s_aware``.
        use_cmb: include the cross-modal branch (cross-attention, memory bank, cosine scores).
        use_membank: augment text through the prototype bank (else ``F_aug = F_tv``).
    ``s_m`` is always computed since inference and the regularizers read it.
    """

    def __init__(self, f_text, window_len=64, heads=4, m_blocks=4, eta=0.99, beta=0.7,
                 use_vob=True, use_cmb=True, use_membank=True):
        super().__init__()
        f_text = torch.as_tensor(f_text)
        n_cls, d = f_text.shape
        self.beta = beta
        self.use_vob, self.use_cmb, self.use_membank = use_vob, use_cmb, use_membank
        if not (use_vob or use_cmb):
            raise ValueError("at least one of use_vob / use_cmb must be enabled")
        self.register_buffer("f_text", f_text.detach().clone())
        self.encoder = TemporalEncoder(d, window_len, heads)
        self.binary = nn.Linear(d, 2)
        self.multiclass = nn.Linear(d, n_cls)
        self.cross = CrossModalAttention(d)
        self.bank = MemoryBank(f_text, m_blocks if use_membank else 0, eta, heads)
        self.kernels = KernelPredictor(d)

    @property
    def C(self) -> int:
        return self.f_text.shape[0] - 1

    def forward(self, x: torch.Tensor) -> Forward:
        x = x.to(self.f_text.dtype)
        f_video = self.encoder(x)
        s_b = binary_head(f_video, self.binary)
        s_m = multiclass_head(f_video, self.multiclass)
        s_tv = f_aug = None
        if self.use_cmb:
            f_tv = self.cross(self.f_text, f_video)
            f_aug = self.bank.augment(f_tv)
            s_tv = cosine_align(f_video, f_tv + f_aug)
            s_aware = fuse_aware(s_m, s_tv) if self.use_vob else s_tv
        else:
            s_aware = s_m
        text = f_aug if f_aug is not None else self.f_text
        kernels = self.kernels(text, f_video, self.beta)
        s_gmm = gmm_scores(kernels, s_m, x.shape[0])
        return Forward(ScoreSet(s_b, s_m, s_tv, s_aware, s_gmm), f_video, f_aug)

    def loss(self, fwd: Forward, y: int, g: int, lam=0.3, gamma=1e-4,
             use_gmm_loss=True, use_reg_loss=True) -> LossBreakdown:
        sc = fwd.scores
        K = pool_size(sc.s_b.shape[0])
        zero = sc.s_b.new_zeros(())
        l_gmm = gmm_loss(sc.s_gmm, sc.s_b) if use_gmm_loss else zero
        l_reg = reg_loss(sc.s_m, sc.s_b) if use_reg_loss else zero
        return total_loss(
            agnostic_loss(sc.s_b, y, K), aware_loss(sc.s_aware, g, K), l_gmm, l_reg,
            lam if use_gmm_loss else 0.0, gamma if use_reg_loss else 0.0,
            K=K, p_b=topk_pool(sc.s_b, K).detach(),
            p_m=torch.softmax(topk_pool(sc.s_aware, K), 0).detach(),
        )
