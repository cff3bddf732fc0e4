"""Prototype memory bank: text augmentation by attention over stored prototypes."""

from __future__ import annotations

import torch
from torch import nn

from .encoder import TransformerBlock


class MemoryBank(nn.Module):
    """Holds the prototype matrix ``M`` ((C+1) x d) as a buffer plus ``m`` attention blocks.

    ``M`` is never an optimizer parameter; it changes only through :meth:`momentum_update`.
    """

    def __init__(self, f_text: torch.Tensor, m_blocks: int = 4, eta: float = 0.99, heads: int = 4):
        super().__init__()
        if f_text.ndim != 2 or f_text.shape[0] < 2:
            raise ValueError("f_text must be a (C+1) x d matrix")
        if not 0.0 <= eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")
        self.eta = eta
        self.register_buffer("M", f_text.detach().clone())
        d = f_text.shape[1]
        self.blocks = nn.ModuleList(TransformerBlock(d, heads) for _ in range(m_blocks))

    @property
    def n_rows(self) -> int:
        return self.M.shape[0]

    def augment(self, f_tv: torch.Tensor) -> torch.Tensor:
        if f_tv.shape != self.M.shape:
            raise ValueError(f"f_tv has shape {tuple(f_tv.shape)}, bank is {tuple(self.M.shape)}")
        x = torch.cat([f_tv, self.M.detach()], dim=0)[None]
        for block in self.blocks:
            x = block(x)
        return x[0, : self.n_rows]

    @torch.no_grad()
    def momentum_update(self, f_aug: torch.Tensor) -> None:
        if f_aug.shape != self.M.shape:
            raise ValueError("f_aug shape does not match the bank")
        self.M.mul_(self.eta).add_(f_aug.detach().to(self.M.dtype), alpha=1.0 - self.eta)


def init_bank(f_text, m_blocks=4, eta=0.99, heads=4) -> MemoryBank:
    return MemoryBank(torch.as_tensor(f_text), m_blocks, eta, heads)


def augment_text(f_tv, bank: MemoryBank):
    return bank.augment(f_tv)


def momentum_update(bank: MemoryBank, f_aug) -> MemoryBank:
    bank.momentum_update(f_aug)
    return bank
