"""
Score curves
============

Train briefly through the command line entry point, then export one test video's
curves as CSV and SVG.
"""

import json
import sys
import tempfile
from pathlib import Path

from lecvad.cli import run
from lecvad.featio import load_manifest

root = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp())
data = root / "data"
run(["synth", "--seed", "4", "--out", str(data), "--C", "2", "--d", "16", "--n-train", "24", "--n-test", "4"])
cfg = root / "cfg.json"
cfg.write_text(json.dumps({"train_manifest": str(data / "train.json"), "test_manifest": str(data / "test.json"),
                           "out": str(root / "run"), "epochs": 3, "batch_size": 8, "lr": 1e-3, "lam": 0.0,
                           "window_len": 16, "m_blocks": 1}))
run(["train", "--config", str(cfg)])

video = next(e.video_id for e in load_manifest(data / "test.json").entries if e.annotation.y == 1)
run(["plot", "--config", str(cfg), "--video", video, "--svg"])
csv_path = root / "run" / f"plot_{video}.csv"
print(csv_path.read_text().splitlines()[0])
print("svg at", csv_path.with_suffix(".svg"))
