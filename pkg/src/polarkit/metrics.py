"""Free-space segmentation and depth evaluation metrics.

Scores that are mathematically undefined for an input (no positive ground
truth, no valid cells) are reported as ``None`` rather than 0.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Optional

import numpy as np

from .errors import DimensionError, DomainError

SEG_FIELDS = ("accuracy", "precision", "recall", "f_max", "iou", "ap")
DEPTH_FIELDS = ("abs_rel", "sq_rel", "rmse", "rmse_log", "delta1", "delta2", "delta3")
DEFAULT_D_MIN = 0.1
DEFAULT_D_MAX = 80.0


def _same_shape(*arrays):
    shapes = {np.shape(a) for a in arrays}
    if len(shapes) != 1:
        raise DimensionError(f"grid shapes differ: {sorted(shapes)}")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def confusion(pred, gt, valid=None) -> ConfusionCounts:
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    valid = np.ones(gt.shape, dtype=bool) if valid is None else np.asarray(valid, dtype=bool)
    _same_shape(pred, gt, valid)
    p, g = pred[valid], gt[valid]
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    return ConfusionCounts(tp, fp, fn, int(p.size) - tp - fp - fn)


@dataclass(frozen=True)
class SegScores:
    accuracy: Optional[float]
    precision: Optional[float]
    recall: Optional[float]
    f_max: Optional[float]
    iou: Optional[float]
    ap: Optional[float]
    threshold: Optional[float] = None  # working point that achieved f_max

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in SEG_FIELDS}


def pr_curve(confidence, gt, valid=None):
    """Precision/recall at every distinct confidence threshold, descending.

    A cell is predicted positive at threshold ``tau`` when ``confidence >= tau``.
    Returns ``(thresholds, tp, fp, n_pos, n_total)``.
    """
    conf = np.asarray(confidence, dtype=np.float64)
    gt = np.asarray(gt, dtype=bool)
    valid = np.ones(gt.shape, dtype=bool) if valid is None else np.asarray(valid, dtype=bool)
    _same_shape(conf, gt, valid)
    c, g = conf[valid], gt[valid]
    if np.any(~np.isfinite(c)):
        raise DomainError("confidence must be finite")
    order = np.argsort(-c, kind="stable")
    c, g = c[order], g[order]
    tp = np.cumsum(g)
    fp = np.cumsum(~g)
    last = np.ones(c.shape, dtype=bool)
    last[:-1] = c[1:] != c[:-1]
    return c[last], tp[last], fp[last], int(g.sum()), int(g.size)


def average_precision(recall: np.ndarray, precision: np.ndarray) -> float:
    """All-points interpolated AP; ``recall`` must be nondecreasing."""
    interp = np.maximum.accumulate(precision[::-1])[::-1]
    steps = np.diff(np.concatenate([[0.0], recall]))
    return float(np.sum(steps * interp))


def seg_metrics(confidence, gt, valid=None) -> SegScores:
    """Road-benchmark metric suite.

    F_max is the best F1 over all distinct confidence thresholds (the lowest
    threshold wins ties); accuracy, precision, recall and IoU are reported at
    that working point.
    """
    thresholds, tp, fp, n_pos, n_total = pr_curve(confidence, gt, valid)
    if n_total == 0:
        return SegScores(None, None, None, None, None, None)
    if n_pos == 0:
        # nothing to find: predicting nothing is the only sensible working point
        return SegScores(1.0, None, None, None, None, None, threshold=math.inf)
    precision = tp / (tp + fp)
    recall = tp / n_pos
    with np.errstate(invalid="ignore", divide="ignore"):
        f = np.where(tp > 0, 2 * precision * recall / (precision + recall), 0.0)
    best = len(f) - 1 - int(np.argmax(f[::-1]))
    tp_b, fp_b = int(tp[best]), int(fp[best])
    fn_b = n_pos - tp_b
    tn_b = n_total - tp_b - fp_b - fn_b
    return SegScores(
        accuracy=(tp_b + tn_b) / n_total,
        precision=float(precision[best]),
        recall=float(recall[best]),
        f_max=float(f[best]),
        iou=tp_b / (tp_b + fp_b + fn_b),
        ap=average_precision(recall, precision),
        threshold=float(thresholds[best]),
    )


@dataclass(frozen=True)
class DepthScores:
    abs_rel: Optional[float]
    sq_rel: Optional[float]
    rmse: Optional[float]
    rmse_log: Optional[float]
    delta1: Optional[float]
    delta2: Optional[float]
    delta3: Optional[float]

    @classmethod
    def not_applicable(cls) -> DepthScores:
        return cls(*([None] * len(DEPTH_FIELDS)))

    def to_dict(self) -> dict:
        return asdict(self)


def _mean(x: np.ndarray) -> float:
    return math.fsum(x.tolist()) / x.size


def depth_metrics(pred, gt, valid=None, d_min: float = DEFAULT_D_MIN, d_max: float = DEFAULT_D_MAX,
                  median_scale: bool = True) -> DepthScores:
    """Eigen-style depth error and accuracy metrics.

    Evaluated on valid cells whose ground truth lies in ``[d_min, d_max]``.
    With ``median_scale`` the prediction is first multiplied by
    ``median(gt) / median(pred)``; it is then clamped to ``[d_min, d_max]``.
    """
    if not d_min < d_max or d_min <= 0:
        raise DomainError(f"need 0 < d_min < d_max, got {d_min}, {d_max}")
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    valid = np.ones(gt.shape, dtype=bool) if valid is None else np.asarray(valid, dtype=bool)
    _same_shape(pred, gt, valid)
    mask = valid & (gt >= d_min) & (gt <= d_max)
    p, g = pred[mask], gt[mask]
    if g.size == 0:
        return DepthScores.not_applicable()
    if np.any(~np.isfinite(p)) or np.any(p <= 0):
        raise DomainError("predicted depths must be positive and finite at evaluated cells")
    if median_scale:
        p = p * (np.median(g) / np.median(p))
    p = np.clip(p, d_min, d_max)
    diff = p - g
    ratio = np.maximum(p / g, g / p)
    return DepthScores(
        abs_rel=_mean(np.abs(diff) / g),
        sq_rel=_mean(diff * diff / g),
        rmse=math.sqrt(_mean(diff * diff)),
        rmse_log=math.sqrt(_mean((np.log(p) - np.log(g)) ** 2)),
        delta1=_mean(ratio < 1.25),
        delta2=_mean(ratio < 1.25**2),
        delta3=_mean(ratio < 1.25**3),
    )


def mean_scores(scores: list) -> dict:
    """Per-frame average of score bundles; ``None`` entries are skipped per field."""
    if not scores:
        return {}
    out = {}
    for f in fields(scores[0]):
        if f.name == "threshold":
            continue
        vals = [getattr(s, f.name) for s in scores if getattr(s, f.name) is not None]
        out[f.name] = math.fsum(vals) / len(vals) if vals else None
    return out


def pooled_seg_metrics(frames) -> SegScores:
    """Seg metrics with every frame's cells pooled into one evaluation.

    ``frames`` yields ``(confidence, gt, valid)`` triples.
    """
    confs, gts = [], []
    for conf, gt, valid in frames:
        conf = np.asarray(conf, dtype=np.float64)
        gt = np.asarray(gt, dtype=bool)
        valid = np.ones(gt.shape, dtype=bool) if valid is None else np.asarray(valid, dtype=bool)
        _same_shape(conf, gt, valid)
        confs.append(conf[valid])
        gts.append(gt[valid])
    if not confs:
        return SegScores(None, None, None, None, None, None)
    return seg_metrics(np.concatenate(confs), np.concatenate(gts))


def pooled_depth_metrics(frames, d_min: float = DEFAULT_D_MIN, d_max: float = DEFAULT_D_MAX,
                         median_scale: bool = True) -> DepthScores:
    """Depth metrics over the union of cells of ``(pred, gt, valid)`` frames.

    Median scaling, when enabled, is still applied per frame.
    """
    preds, gts = [], []
    for pred, gt, valid in frames:
        pred = np.asarray(pred, dtype=np.float64)
        gt = np.asarray(gt, dtype=np.float64)
        valid = np.ones(gt.shape, dtype=bool) if valid is None else np.asarray(valid, dtype=bool)
        mask = valid & (gt >= d_min) & (gt <= d_max)
        p, g = pred[mask], gt[mask]
        if median_scale and g.size:
            if np.any(p <= 0):
                raise DomainError("predicted depths must be positive at evaluated cells")
            p = p * (np.median(g) / np.median(p))
        preds.append(p)
        gts.append(g)
    if not gts:
        return DepthScores.not_applicable()
    return depth_metrics(np.concatenate(preds), np.concatenate(gts), None, d_min, d_max, median_scale=False)
