"""Polygon IoU, one-to-one matching and precision / recall / F-measure."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Polygon, scanline_fill


@dataclass
class MatchResult:
    tp: int
    fp: int
    fn: int
    ious: list[float] = field(default_factory=list)  # best IoU per (non-ignored) gt


@dataclass
class EvalReport:
    precision: float
    recall: float
    fmeasure: float
    tp: int
    fp: int
    fn: int
    per_image: list[MatchResult] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "fmeasure": self.fmeasure,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "per_image": [{"tp": m.tp, "fp": m.fp, "fn": m.fn} for m in self.per_image],
        }

    def summary(self) -> str:
        return (
            f"precision={self.precision:.4f} recall={self.recall:.4f} "
            f"fmeasure={self.fmeasure:.4f} (tp={self.tp} fp={self.fp} fn={self.fn})"
        )


def polygon_iou(a: Polygon, b: Polygon) -> float:
    """IoU by rasterizing both polygons over their joint bounding box.

    The grid samples two cells per pixel along each axis, and at least 64.
    """
    if a.area <= 0 or b.area <= 0:
        return 0.0
    ax0, ay0, ax1, ay1 = a.bounds
    bx0, by0, bx1, by1 = b.bounds
    if ax1 <= bx0 or bx1 <= ax0 or ay1 <= by0 or by1 <= ay0:
        return 0.0
    x0, y0 = min(ax0, bx0), min(ay0, by0)
    x1, y1 = max(ax1, bx1), max(ay1, by1)
    nx = max(64, math.ceil(2 * (x1 - x0)))
    ny = max(64, math.ceil(2 * (y1 - y0)))
    scale = np.array([nx / (x1 - x0), ny / (y1 - y0)])
    origin = np.array([x0, y0])
    ma = scanline_fill((a.vertices - origin) * scale, ny, nx)
    mb = scanline_fill((b.vertices - origin) * scale, ny, nx)
    union = np.count_nonzero(ma | mb)
    if union == 0:
        return 0.0
    return np.count_nonzero(ma & mb) / union


def match(dets, gts, iou_thresh: float = 0.5, ignore=None) -> MatchResult:
    """Greedy one-to-one matching in descending detection score.

    ``dets`` holds objects with ``polygon`` and ``score`` attributes or
    ``(score, Polygon)`` pairs.  ``ignore`` flags ground truths that count
    neither as misses nor, when matched, make a detection a false positive.
    """
    det_polys, det_scores = [], []
    for d in dets:
        if isinstance(d, tuple):
            det_scores.append(float(d[0]))
            det_polys.append(d[1])
        else:
            det_scores.append(float(d.score))
            det_polys.append(d.polygon)
    ignore = list(ignore) if ignore is not None else [False] * len(gts)
    care = [i for i in range(len(gts)) if not ignore[i]]
    dont = [i for i in range(len(gts)) if ignore[i]]

    iou = np.zeros((len(dets), len(gts)))
    for i, dp in enumerate(det_polys):
        for j, gp in enumerate(gts):
            iou[i, j] = polygon_iou(dp, gp)

    order = sorted(range(len(dets)), key=lambda i: (-det_scores[i], i))
    taken = set()
    tp = fp = 0
    for i in order:
        best_j, best = -1, -1.0
        for j in care:
            if j not in taken and iou[i, j] >= iou_thresh and iou[i, j] > best:
                best_j, best = j, iou[i, j]
        if best_j >= 0:
            taken.add(best_j)
            tp += 1
        elif any(iou[i, j] >= iou_thresh for j in dont):
            continue
        else:
            fp += 1
    fn = len(care) - len(taken)
    best_per_gt = [float(iou[:, j].max()) if len(dets) else 0.0 for j in care]
    return MatchResult(tp=tp, fp=fp, fn=fn, ious=best_per_gt)


def f_measure(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def report(per_image: list[MatchResult]) -> EvalReport:
    """Micro-averaged precision, recall and F-measure over all images."""
    tp = sum(m.tp for m in per_image)
    fp = sum(m.fp for m in per_image)
    fn = sum(m.fn for m in per_image)
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    return EvalReport(p, r, f_measure(p, r), tp, fp, fn, list(per_image))
