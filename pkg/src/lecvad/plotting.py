"""Score-curve export: per-snippet CSV and a dependency-free SVG rendering."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .infer import coarse_scores

CSV_HEADER = ("t", "coarse", "s_b_anomaly", "one_minus_s_m_normal", "s_gmm", "gt")


def curve_rows(scores: dict, annotation, T: int) -> list[tuple]:
    conf = coarse_scores(scores)
    gt = np.zeros(T, dtype=int)
    if annotation.frame_labels is not None:
        gt[:] = annotation.frame_labels
    else:
        for s, e, _ in annotation.instances:
            gt[s - 1:e] = 1
    s_gmm = scores["s_gmm"] if scores.get("s_gmm") is not None else np.zeros(T)
    return [(t + 1, float(conf[t]), float(scores["s_b"][t, 1]), float(1 - scores["s_m"][t, 0]),
             float(s_gmm[t]), int(gt[t])) for t in range(T)]


def write_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for t, *vals, gt in rows:
            writer.writerow([t, *(f"{v:.6f}" for v in vals), gt])


_COLORS = {"coarse": "#d62728", "s_b_anomaly": "#1f77b4", "one_minus_s_m_normal": "#2ca02c", "s_gmm": "#9467bd"}


def render_svg(rows, instances=(), width=800, height=240, title="") -> str:
    T = len(rows)
    pad = 30
    sx = (width - 2 * pad) / max(T - 1, 1)
    sy = height - 2 * pad

    def pt(i, v):
        return f"{pad + i * sx:.2f},{height - pad - v * sy:.2f}"

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>']
    for s, e, _ in instances:
        x0 = pad + (s - 1) * sx
        parts.append(f'<rect x="{x0:.2f}" y="{pad}" width="{max((e - s) * sx, 1):.2f}" height="{sy}" '
                     f'fill="#ffbb78" fill-opacity="0.4"/>')
    parts.append(f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{sy}" fill="none" stroke="black"/>')
    for col, (name, color) in enumerate(_COLORS.items(), start=1):
        path = " ".join(pt(i, min(max(r[col], 0.0), 1.0)) for i, r in enumerate(rows))
        parts.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{pad + 170 * (col - 1)}" y="{height - 8}" font-size="11" fill="{color}">{name}</text>')
    if title:
        parts.append(f'<text x="{pad}" y="{pad - 10}" font-size="13">{title}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def save_svg(rows, path, instances=(), title="") -> None:
    Path(path).write_text(render_svg(rows, instances, title=title))
