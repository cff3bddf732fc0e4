"""Coarse snippet confidences and instance generation from a :class:`ScoreSet`.

All intervals use 1-based inclusive snippet coordinates.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .metrics import temporal_iou


@dataclass(frozen=True)
class AnomalyInstance:
    s: int
    e: int
    g: int
    w: float

    def __post_init__(self):
        if not 1 <= self.s <= self.e or self.g < 1:
            raise ValueError(f"invalid instance {self}")


@dataclass
class InferConfig:
    r_cls: float = 0.1
    r_ano: float = 0.2
    gap: int = 0
    iou_thresh: float = 0.5
    score_source: str = "sm"
    outer_ratio: float = 0.25

    ALIASES = {
        "infer.r_cls": "r_cls",
        "infer.r_ano": "r_ano",
        "infer.gap": "gap",
        "infer.iou_thresh": "iou_thresh",
        "infer.score_source": "score_source",
        "infer.outer_ratio": "outer_ratio",
    }

    def __post_init__(self):
        if self.score_source not in ("sm", "aware"):
            raise ValueError("score_source must be 'sm' or 'aware'")
        if not 0 < self.iou_thresh <= 1:
            raise ValueError("iou_thresh must lie in (0, 1]")
        if self.gap < 0:
            raise ValueError("gap must be >= 0")


def _as_dict(scores) -> dict:
    return scores if isinstance(scores, dict) else scores.numpy()


def _softmax(v):
    z = np.exp(v - v.max())
    return z / z.sum()


def _topk_mean(scores, K):
    # per-column mean of the K largest entries
    return -np.sort(-scores, axis=0, kind="stable")[:K].mean(axis=0)


def coarse_scores(scores) -> np.ndarray:
    sc = _as_dict(scores)
    return ((1.0 - sc["s_m"][:, 0]) + sc["s_b"][:, 1]) / 2.0


def video_activations(scores, K: int | None = None) -> np.ndarray:
    sc = _as_dict(scores)
    s_aware = sc["s_aware"]
    K = K or max(s_aware.shape[0] // 16, 1)
    return _softmax(_topk_mean(s_aware, K))


def select_categories(scores, K: int | None = None, r_cls: float = 0.1) -> list[int]:
    act = video_activations(scores, K)
    return [c for c in range(1, len(act)) if act[c] > r_cls]


def runs_above(values: np.ndarray, thresh: float, gap: int = 0) -> list[tuple[int, int]]:
    """Maximal runs of ``values > thresh`` joined across internal gaps of at most ``gap``."""
    idx = np.flatnonzero(np.asarray(values) > thresh)
    runs: list[list[int]] = []
    for i in idx:
        if runs and i - runs[-1][1] - 1 <= gap:
            runs[-1][1] = i
        else:
            runs.append([i, i])
    return [(int(s) + 1, int(e) + 1) for s, e in runs]


def candidate_instances(scores, c: int, r_ano: float = 0.2, gap: int = 0, source: str = "sm"):
    if c < 1:
        raise ValueError("candidates are generated for anomaly categories only")
    sc = _as_dict(scores)
    column = (sc["s_m"] if source == "sm" else sc["s_aware"])[:, c]
    return runs_above(column, r_ano, gap)


def outer_inner_confidence(values: np.ndarray, s: int, e: int, ratio: float = 0.25) -> float:
    T = len(values)
    if not 1 <= s <= e <= T:
        raise ValueError(f"interval ({s}, {e}) outside 1..{T}")
    delta = max(1, int(round(ratio * (e - s + 1))))
    inner = float(np.mean(values[s - 1:e]))
    left = values[max(s - 1 - delta, 0):s - 1]
    right = values[e:min(e + delta, T)]
    outer = np.concatenate([left, right])
    if outer.size == 0:
        return inner
    return inner - float(outer.mean())


def temporal_nms(instances, iou_thresh: float = 0.5) -> list[AnomalyInstance]:
    """Greedy per-category suppression; kept instances have pairwise IoU < iou_thresh."""
    order = sorted(instances, key=lambda a: (-a.w, a.s))
    kept: list[AnomalyInstance] = []
    for cand in order:
        if all(k.g != cand.g or temporal_iou((k.s, k.e), (cand.s, cand.e)) < iou_thresh for k in kept):
            kept.append(cand)
    return kept


def detect(scores, cfg: InferConfig | None = None, K: int | None = None) -> list[AnomalyInstance]:
    cfg = cfg or InferConfig()
    sc = _as_dict(scores)
    source = sc["s_m"] if cfg.score_source == "sm" else sc["s_aware"]
    out = []
    for c in select_categories(sc, K, cfg.r_cls):
        for s, e in candidate_instances(sc, c, cfg.r_ano, cfg.gap, cfg.score_source):
            w = outer_inner_confidence(source[:, c], s, e, cfg.outer_ratio)
            out.append(AnomalyInstance(s, e, c, w))
    return sorted(temporal_nms(out, cfg.iou_thresh), key=lambda a: (-a.w, a.s))


def snippet_to_seconds(s: int, e: int, fps: float, snippet_len: int) -> tuple[float, float]:
    return (s - 1) * snippet_len / fps, e * snippet_len / fps


def detection_record(video_id: str, inst: AnomalyInstance, fps=30.0, snippet_len=16) -> dict:
    t0, t1 = snippet_to_seconds(inst.s, inst.e, fps, snippet_len)
    rec = {"video_id": video_id, **asdict(inst)}
    rec.update(t_start_sec=t0, t_end_sec=t1)
    return rec


def write_detections(records, path) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def read_detections(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
