"""Slow reference implementations used to check the vectorized code."""

from __future__ import annotations

import math
from fractions import Fraction


def brute_force_ap(conf, gt) -> float:
    """All-points interpolated AP by explicit threshold enumeration in exact arithmetic."""
    conf = [float(c) for c in conf]
    gt = [bool(g) for g in gt]
    n_pos = sum(gt)
    points = []
    for tau in sorted(set(conf), reverse=True):
        tp = sum(1 for c, g in zip(conf, gt) if c >= tau and g)
        fp = sum(1 for c, g in zip(conf, gt) if c >= tau and not g)
        points.append((Fraction(tp, n_pos), Fraction(tp, tp + fp)))
    ap = Fraction(0)
    prev_recall = Fraction(0)
    for i, (recall, _) in enumerate(points):
        interp = max(p for _, p in points[i:])
        ap += (recall - prev_recall) * interp
        prev_recall = recall
    return float(ap)


def brute_force_fmax(conf, gt) -> float:
    best = 0.0
    for tau in set(conf):
        tp = sum(1 for c, g in zip(conf, gt) if c >= tau and g)
        fp = sum(1 for c, g in zip(conf, gt) if c >= tau and not g)
        fn = sum(gt) - tp
        if tp:
            best = max(best, 2 * tp / (2 * tp + fp + fn))
    return best


def polarizer(i, aolp, dolp, angle) -> float:
    return 0.5 * i * (1 + dolp * math.cos(2 * (angle - aolp)))
