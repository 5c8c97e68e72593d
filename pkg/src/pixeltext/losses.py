"""Training objectives and their analytic gradients.

Everything here is plain numpy on float64.  The gradients exist to validate the
loss arithmetic against finite differences; nothing here trains a network.

Conventions:

* ``bce`` clamps the prediction to ``[EPS, 1 - EPS]`` before taking logs, and
  the gradient is evaluated at the clamped value.
* Background pixels enter the skeleton and the TF/TR terms through hard-negative
  mining (averaged over the kept sample): the ``3 * n_pos`` negatives with the highest loss are kept (ties go to
  the lower flat index).  With no positives every negative is kept.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EPS = 1e-7
LAMBDA = 3.0
NEG_RATIO = 3

DPR_NAMES = ("dpr_up", "dpr_down", "dpr_left", "dpr_right")
GRAD_CHANNELS = ("ts", "tf", "tr") + DPR_NAMES


@dataclass(frozen=True)
class LossBreakdown:
    l_ts: float
    l_dpr: float
    l_tf: float
    l_tr: float
    total: float
    lam: float = LAMBDA


@dataclass
class GradientSet:
    ts: np.ndarray
    tf: np.ndarray
    tr: np.ndarray
    dpr_up: np.ndarray
    dpr_down: np.ndarray
    dpr_left: np.ndarray
    dpr_right: np.ndarray

    def channel(self, name: str) -> np.ndarray:
        return getattr(self, name)


def _clamp(p):
    return np.clip(np.asarray(p, dtype=np.float64), EPS, 1.0 - EPS)


def bce(pred, target):
    """Elementwise binary cross entropy with clamped probabilities."""
    p = _clamp(pred)
    t = np.asarray(target, dtype=np.float64)
    out = -(t * np.log(p) + (1.0 - t) * np.log(1.0 - p))
    return float(out) if out.ndim == 0 else out


def bce_grad(pred, target):
    p = _clamp(pred)
    t = np.asarray(target, dtype=np.float64)
    out = -t / p + (1.0 - t) / (1.0 - p)
    return float(out) if out.ndim == 0 else out


def smooth_l1(x):
    x = np.asarray(x, dtype=np.float64)
    ax = np.abs(x)
    out = np.where(ax < 1.0, 0.5 * x * x, ax - 0.5)
    return float(out) if out.ndim == 0 else out


def smooth_l1_grad(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.where(np.abs(x) < 1.0, x, np.sign(x))
    return float(out) if out.ndim == 0 else out


def mine_negatives(losses: np.ndarray, negative: np.ndarray, n_pos: int) -> np.ndarray:
    """Boolean mask of the kept negatives: the hardest ``NEG_RATIO * n_pos`` of them."""
    flat_neg = np.flatnonzero(negative)
    keep = np.zeros(losses.shape, dtype=bool)
    if n_pos == 0:
        keep.flat[flat_neg] = True
        return keep
    k = min(NEG_RATIO * n_pos, len(flat_neg))
    if k == 0:
        return keep
    vals = losses.ravel()[flat_neg]
    order = np.argsort(-vals, kind="stable")[:k]
    keep.flat[flat_neg[order]] = True
    return keep


def _ts_weights(gt_ts: np.ndarray, instance_ids: np.ndarray):
    """Per-pixel weight B / S_i on skeleton pixels, 0 elsewhere."""
    pos = gt_ts > 0
    ids = np.where(pos, instance_ids, 0)
    if pos.any() and np.any(ids[pos] == 0):
        raise ValueError("skeleton pixels without an instance id")
    present, counts = np.unique(ids[pos], return_counts=True)
    n_inst = len(present)
    weights = np.zeros(gt_ts.shape, dtype=np.float64)
    for k, s in zip(present, counts):
        weights[ids == k] = n_inst / s
    return pos, weights


def _ts_terms(pred_ts, gt_ts, instance_ids):
    pos, weights = _ts_weights(gt_ts, instance_ids)
    per_px = bce(pred_ts, gt_ts)
    neg = mine_negatives(per_px, ~pos, int(pos.sum()))
    coef = weights + neg / max(int(neg.sum()), 1)
    return per_px, coef


def loss_ts(pred_ts, gt_ts, instance_ids) -> float:
    """Size-balanced skeleton cross entropy.

    Each skeleton pixel of instance ``i`` is weighted by ``B / S_i`` (``B``
    instances in the image, ``S_i`` skeleton pixels in instance ``i``) so every
    instance contributes equally.  The mined background sample adds its mean
    cross entropy, which keeps the whole term independent of image size.
    """
    per_px, coef = _ts_terms(pred_ts, gt_ts, instance_ids)
    return float(np.sum(coef * per_px))


def ts_instance_contributions(pred_ts, gt_ts, instance_ids) -> dict[int, float]:
    pos, weights = _ts_weights(gt_ts, instance_ids)
    per_px = bce(pred_ts, gt_ts)
    ids = np.where(pos, instance_ids, 0)
    return {int(k): float(np.sum((weights * per_px)[ids == k])) for k in np.unique(ids[pos])}


def loss_dpr(preds, gts) -> float:
    """Smooth L1 over each direction's ground-truth support, averaged over counted pixels."""
    total = 0.0
    count = 0
    for p, g in zip(preds, gts):
        g = np.asarray(g, dtype=np.float64)
        sup = g > 0
        total += float(np.sum(smooth_l1(np.asarray(p, dtype=np.float64)[sup] - g[sup])))
        count += int(sup.sum())
    return total / count if count else 0.0


def _mined_mean_terms(pred, gt):
    gt = np.asarray(gt, dtype=np.float64)
    pos = gt > 0
    per_px = bce(pred, gt)
    keep = pos | mine_negatives(per_px, ~pos, int(pos.sum()))
    return per_px, keep


def loss_mined_bce(pred, gt) -> float:
    per_px, keep = _mined_mean_terms(pred, gt)
    n = int(keep.sum())
    return float(np.sum(per_px[keep]) / n) if n else 0.0


def loss_tf(pred_tf, gt_ts) -> float:
    """TF is a text-confidence map trained against the binary skeleton target."""
    return loss_mined_bce(pred_tf, gt_ts)


def loss_tr(pred_tr, gt_tr) -> float:
    return loss_mined_bce(pred_tr, gt_tr)


def _instance_ids(labels):
    ids = getattr(labels, "instance_ids", None)
    if ids is None:
        raise ValueError("labels carry no instance ids")
    return ids


def total_loss(preds, labels, lam: float = LAMBDA) -> LossBreakdown:
    """Weighted sum ``lam * l_ts + l_dpr + l_tf + l_tr``."""
    l_ts = loss_ts(preds.ts, labels.ts, _instance_ids(labels))
    l_dpr = loss_dpr([getattr(preds, n) for n in DPR_NAMES], [getattr(labels, n) for n in DPR_NAMES])
    l_tf = loss_tf(preds.tf, labels.ts)
    l_tr = loss_tr(preds.tr, labels.tr)
    total = lam * l_ts + l_dpr + l_tf + l_tr
    return LossBreakdown(l_ts=l_ts, l_dpr=l_dpr, l_tf=l_tf, l_tr=l_tr, total=total, lam=lam)


def mined_selection(preds, labels) -> dict[str, np.ndarray]:
    """The hard-negative masks each mined term uses at this evaluation point."""
    _, coef = _ts_terms(preds.ts, labels.ts, _instance_ids(labels))
    return {
        "ts": (coef > 0) & ~(np.asarray(labels.ts) > 0),
        "tf": _mined_mean_terms(preds.tf, labels.ts)[1],
        "tr": _mined_mean_terms(preds.tr, labels.tr)[1],
    }


def _mined_mean_grad(pred, gt):
    per_px, keep = _mined_mean_terms(pred, gt)
    n = int(keep.sum())
    g = np.zeros(per_px.shape)
    if n:
        g[keep] = bce_grad(np.asarray(pred, dtype=np.float64)[keep], np.asarray(gt, dtype=np.float64)[keep]) / n
    return g


def gradients(preds, labels, lam: float = LAMBDA) -> GradientSet:
    """Analytic d(total)/d(prediction) for every channel.

    Negative mining and support sets are treated as fixed at the evaluation
    point, matching how the loss is piecewise smooth between selection changes.
    """
    _, coef = _ts_terms(preds.ts, labels.ts, _instance_ids(labels))
    g_ts = lam * coef * bce_grad(preds.ts, labels.ts)

    dpr_grads = {}
    count = sum(int((np.asarray(getattr(labels, n)) > 0).sum()) for n in DPR_NAMES)
    for n in DPR_NAMES:
        g = np.asarray(getattr(labels, n), dtype=np.float64)
        p = np.asarray(getattr(preds, n), dtype=np.float64)
        grad = np.zeros(g.shape)
        sup = g > 0
        if count:
            grad[sup] = smooth_l1_grad(p[sup] - g[sup]) / count
        dpr_grads[n] = grad

    return GradientSet(
        ts=g_ts,
        tf=_mined_mean_grad(preds.tf, labels.ts),
        tr=_mined_mean_grad(preds.tr, labels.tr),
        **dpr_grads,
    )
