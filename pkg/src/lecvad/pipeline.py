"""Scoring a manifest with a trained model and evaluating the result."""

from __future__ import annotations

import numpy as np
import torch

from .featio import Manifest
from .infer import InferConfig, coarse_scores, detect
from .metrics import EvalReport, average_precision, detection_map, predictions_per_gt, roc_auc, total_variation
from .model import LECVAD
from .trainer import subsample


@torch.no_grad()
def score_video(model: LECVAD, x) -> dict:
    model.eval()
    fwd = model(torch.as_tensor(np.asarray(x)).to(model.f_text.dtype))
    return fwd.scores.numpy()


def score_manifest(model: LECVAD, manifest: Manifest, T_max: int | None = None):
    """Yield ``(entry, scores)``; test videos are scored at full length unless ``T_max`` is given."""
    for entry in manifest.entries:
        x = manifest.load_features(entry).data
        if T_max is not None:
            x = subsample(x, T_max)
        yield entry, score_video(model, x)


def evaluate(model: LECVAD, manifest: Manifest, cfg: InferConfig | None = None):
    """Returns ``(EvalReport, detections)`` with detections as (video_id, s, e, g, w) tuples."""
    cfg = cfg or InferConfig()
    confs, labels, preds, gts = [], [], [], []
    tvs = []
    for entry, sc in score_manifest(model, manifest):
        conf = coarse_scores(sc)
        confs.append(conf)
        tvs.append(total_variation(conf))
        ann = entry.annotation
        if ann.frame_labels is not None:
            labels.append(ann.frame_labels)
        for inst in detect(sc, cfg):
            preds.append((entry.video_id, inst.s, inst.e, inst.g, inst.w))
        gts.extend((entry.video_id, s, e, g) for s, e, g in ann.instances)

    report = detection_map(preds, gts) if gts else EvalReport()
    if labels and len(labels) == len(confs):
        flat_conf, flat_lab = np.concatenate(confs), np.concatenate(labels)
        report.frame_auc = roc_auc(flat_conf, flat_lab)
        report.frame_ap = average_precision(flat_conf, flat_lab)
    report.extra = {
        "mean_total_variation": float(np.mean(tvs)),
        "predictions_per_gt@0.5": predictions_per_gt(preds, gts, 0.5) if gts else 0.0,
        "n_predictions": len(preds),
        "n_ground_truth": len(gts),
        "n_videos": len(manifest),
    }
    return report, preds
