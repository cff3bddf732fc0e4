"""
Training and checkpoints
========================

Fit a model on a toy split, inspect the per-epoch losses and resume from a checkpoint.
"""

import tempfile
from pathlib import Path

import torch

from lecvad import SynthConfig, TrainConfig, fit, load_checkpoint, save_checkpoint, synth_dataset

torch.set_num_threads(1)
root = Path(tempfile.mkdtemp())
train, _, _ = synth_dataset(SynthConfig(C=2, d=16, n_train=24, n_test=4, T_min=32, T_max=64), 2, root / "data")

# A short, aggressive schedule so the demo finishes in seconds.
cfg = TrainConfig(epochs=4, batch_size=8, lr=1e-3, T_max=64, window_len=16, m_blocks=1, lam=0.0)
state = fit(train, cfg)
for row in state.log:
    print(f"epoch {row['epoch']}: total {row['l_total']:.4f} "
          f"(agnostic {row['l_agnostic']:.4f}, aware {row['l_aware']:.4f})")

# Stop half way, checkpoint, resume: the result matches the uninterrupted run exactly.
half = fit(train, cfg, max_steps=state.step // 2)
save_checkpoint(half, root / "half.lck")
resumed = fit(train, cfg, state=load_checkpoint(root / "half.lck"))
same = all(torch.equal(a, b) for a, b in zip(state.model.state_dict().values(), resumed.model.state_dict().values()))
print("resumed run identical to uninterrupted:", same)
