"""Frame-level AUC/AP and detection mAP over temporal IoU thresholds."""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

THRESHOLDS = (0.1, 0.2, 0.3, 0.4, 0.5)


class MetricError(ValueError):
    pass


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUC; tied scores get average ranks."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos, n_neg = labels.sum(), (~labels).sum()
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC undefined without both positive and negative labels")
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def _sweep_ap(is_tp: np.ndarray, n_pos: int) -> float:
    # step-interpolated: sum over ranks of (recall gain) * precision
    tp = np.cumsum(is_tp)
    precision = tp / np.arange(1, len(is_tp) + 1)
    return float(np.sum(precision * is_tp) / n_pos)


def average_precision(scores, labels) -> float:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if not labels.any():
        raise MetricError("AP undefined without positive labels")
    order = np.argsort(-scores, kind="stable")
    return _sweep_ap(labels[order].astype(np.float64), int(labels.sum()))


def temporal_iou(a, b) -> float:
    inter = min(a[1], b[1]) - max(a[0], b[0]) + 1
    if inter <= 0:
        return 0.0
    union = (a[1] - a[0] + 1) + (b[1] - b[0] + 1) - inter
    return inter / union


def category_ap(preds, gts, theta: float) -> float:
    """AP of one category. ``preds``: [(video_id, s, e, w)]; ``gts``: {video_id: [(s, e)]}."""
    n_gt = sum(len(v) for v in gts.values())
    if n_gt == 0:
        raise MetricError("no ground truth for category")
    order = sorted(range(len(preds)), key=lambda i: -preds[i][3])
    used = {vid: np.zeros(len(v), dtype=bool) for vid, v in gts.items()}
    is_tp = np.zeros(len(preds))
    for rank, i in enumerate(order):
        vid, s, e, _ = preds[i]
        best, best_j = -1.0, -1
        for j, gt in enumerate(gts.get(vid, [])):
            if used[vid][j]:
                continue
            iou = temporal_iou((s, e), gt)
            if iou > best:
                best, best_j = iou, j
        if best_j >= 0 and best >= theta:
            used[vid][best_j] = True
            is_tp[rank] = 1.0
    return _sweep_ap(is_tp, n_gt) if len(preds) else 0.0


@dataclass
class EvalReport:
    frame_auc: float | None = None
    frame_ap: float | None = None
    map_at: dict = field(default_factory=dict)
    avg_map: float | None = None
    per_category: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "frame_auc": self.frame_auc,
            "frame_ap": self.frame_ap,
            "map_at": {f"{k:.1f}": v for k, v in self.map_at.items()},
            "avg_map": self.avg_map,
            "per_category": {str(c): {f"{k:.1f}": v for k, v in row.items()} for c, row in self.per_category.items()},
            **self.extra,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def table(self) -> str:
        head = "".join(f"{f'mAP@{t:.1f}':>10}" for t in self.map_at) + f"{'AVG':>10}"
        row = "".join(f"{100 * v:>10.2f}" for v in self.map_at.values()) + f"{100 * (self.avg_map or 0):>10.2f}"
        lines = [f"{'':>10}{head}", f"{'all':>10}{row}"]
        for c, vals in sorted(self.per_category.items()):
            lines.append(f"{f'c={c}':>10}" + "".join(f"{100 * v:>10.2f}" for v in vals.values())
                         + f"{100 * np.mean(list(vals.values())):>10.2f}")
        if self.frame_auc is not None:
            lines.append(f"frame AUC {100 * self.frame_auc:.2f}  frame AP {100 * self.frame_ap:.2f}")
        return "\n".join(lines)


def detection_map(predictions, ground_truth, thresholds=THRESHOLDS) -> EvalReport:
    """``predictions``: iterable of (video_id, s, e, g, w); ``ground_truth``: (video_id, s, e, g)."""
    gts: dict[int, dict] = defaultdict(lambda: defaultdict(list))
    for vid, s, e, g in ground_truth:
        gts[g][vid].append((s, e))
    if not gts:
        raise MetricError("no ground-truth instances")
    preds: dict[int, list] = defaultdict(list)
    for vid, s, e, g, w in predictions:
        preds[g].append((vid, s, e, w))
    report = EvalReport()
    for c in sorted(gts):
        report.per_category[c] = {t: category_ap(preds.get(c, []), gts[c], t) for t in thresholds}
    for t in thresholds:
        report.map_at[t] = float(np.mean([row[t] for row in report.per_category.values()]))
    report.avg_map = float(np.mean(list(report.map_at.values())))
    return report


def total_variation(conf) -> float:
    return float(np.abs(np.diff(np.asarray(conf, dtype=np.float64))).sum())


def predictions_per_gt(predictions, ground_truth, theta=0.5) -> float:
    """Mean count of same-video, same-category predictions with IoU >= theta per GT instance."""
    counts = []
    for vid, s, e, g in ground_truth:
        counts.append(sum(1 for pv, ps, pe, pg, _ in predictions
                          if pv == vid and pg == g and temporal_iou((ps, pe), (s, e)) >= theta))
    return float(np.mean(counts)) if counts else 0.0
