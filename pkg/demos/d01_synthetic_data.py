"""
Synthetic feature dumps
=======================

Generate a small labelled split, then read it back through the manifest API.
"""

import sys
import tempfile
from pathlib import Path

import numpy as np

from lecvad import SynthConfig, load_manifest, read_features, synth_dataset

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp()) / "data"

# Category prototypes are unit vectors with bounded pairwise cosine; anomalous
# intervals are prototype plus AR(1) noise, everything else is pure noise.
cfg = SynthConfig(C=3, d=16, n_train=20, n_test=8, T_min=48, T_max=96)
train, test, files = synth_dataset(cfg, seed=1, out_dir=out)
print(f"wrote {len(files)} files to {out}")

# The text bank holds one row per category plus the normal row 0.
bank = train.load_text_bank()
print("text bank", bank.embeddings.shape)

# Training entries only carry a video label; test entries keep intervals and frame labels.
n_abn = sum(e.annotation.y for e in train.entries)
print(f"train: {len(train)} videos, {n_abn} anomalous")
entry = next(e for e in test.entries if e.annotation.y == 1)
seq = read_features(entry.path)
print(f"{entry.video_id}: T={seq.T} category={entry.annotation.g} intervals={entry.annotation.instances}")

# Anomalous snippets sit near their prototype; compare mean cosine inside and outside.
proto = bank.embeddings[entry.annotation.g]
cos = seq.data @ proto / np.linalg.norm(seq.data, axis=1) / np.linalg.norm(proto)
mask = entry.annotation.frame_labels.astype(bool)
print(f"cosine to prototype: inside {cos[mask].mean():.3f}, outside {cos[~mask].mean():.3f}")

# Manifests round trip through JSON.
print("reloaded", len(load_manifest(out / "test.json")), "test entries")
