from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_force_ap, brute_force_fmax
from polarkit.errors import DimensionError, DomainError
from polarkit.metrics import (
    DEPTH_FIELDS,
    SEG_FIELDS,
    confusion,
    depth_metrics,
    mean_scores,
    pooled_depth_metrics,
    pooled_seg_metrics,
    seg_metrics,
)


class TestConfusion:
    def test_perfect(self):
        m = np.array([1, 0, 1, 1], bool)
        c = confusion(m, m)
        assert c.fp == 0 and c.fn == 0 and c.total == 4

    def test_all_false_positives(self):
        c = confusion(np.ones(10, bool), np.zeros(10, bool))
        assert (c.tp, c.fp, c.fn, c.tn) == (0, 10, 0, 0)

    def test_hand_example(self):
        c = confusion(np.array([1, 1, 0, 0], bool).reshape(4, 1), np.array([1, 0, 1, 0], bool).reshape(4, 1))
        assert (c.tp, c.fp, c.fn, c.tn) == (1, 1, 1, 1)

    def test_valid_mask(self):
        c = confusion(np.ones(4, bool), np.zeros(4, bool), np.array([1, 1, 0, 0], bool))
        assert c.fp == 2 and c.total == 2

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            confusion(np.ones(3, bool), np.ones(4, bool))


class TestSegMetrics:
    def test_perfect(self):
        gt = np.array([1, 0, 1, 0, 0, 1], bool)
        s = seg_metrics(gt.astype(float), gt)
        assert all(getattr(s, k) == 1 for k in SEG_FIELDS)

    def test_ap_hand_example(self):
        s = seg_metrics(np.array([0.9, 0.8, 0.7, 0.6]), np.array([1, 0, 1, 0], bool))
        assert s.ap == pytest.approx((1 + 2 / 3) / 2, abs=1e-15)

    def test_uniform_confidence(self):
        gt = np.arange(100) % 2 == 0
        s = seg_metrics(np.full(100, 0.5), gt)
        assert (s.precision, s.recall) == (0.5, 1.0)
        assert s.f_max == pytest.approx(2 / 3)

    def test_fmax_threshold_lowest_on_tie(self):
        # thresholds 0.9 and 0.1 both reach F1 = 2/3; the lower one is reported
        s = seg_metrics(np.array([0.9, 0.5, 0.1]), np.array([1, 0, 1], bool))
        assert s.f_max == pytest.approx(0.8)
        assert s.threshold == 0.1

    def test_no_positives(self):
        s = seg_metrics(np.array([0.2, 0.4]), np.zeros(2, bool))
        assert s.accuracy == 1.0 and s.ap is None and s.f_max is None

    def test_no_cells(self):
        s = seg_metrics(np.array([0.2]), np.array([True]), np.array([False]))
        assert s.to_dict() == {k: None for k in SEG_FIELDS}

    def test_nonfinite(self):
        with pytest.raises(DomainError):
            seg_metrics(np.array([np.nan]), np.array([True]))

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 6), st.booleans()), min_size=1, max_size=30))
    def test_against_brute_force(self, cells):
        conf = np.array([c / 6 for c, _ in cells])
        gt = np.array([g for _, g in cells])
        s = seg_metrics(conf, gt)
        if not gt.any():
            assert s.ap is None
            return
        assert s.ap == pytest.approx(brute_force_ap(conf, gt), abs=1e-12)
        assert s.f_max == pytest.approx(brute_force_fmax(conf, gt), abs=1e-12)
        assert 0 <= s.iou <= s.f_max <= 1


class TestDepthMetrics:
    def test_identity(self):
        gt = np.linspace(1, 50, 20)
        d = depth_metrics(gt, gt)
        assert d.abs_rel == 0 and d.rmse == 0 and d.rmse_log == 0
        assert d.delta1 == d.delta2 == d.delta3 == 1

    def test_median_scale_invariance(self):
        gt = np.linspace(1, 50, 21)
        d = depth_metrics(2 * gt, gt)
        assert d.abs_rel == pytest.approx(0, abs=1e-15) and d.delta1 == 1

    def test_hand_example(self):
        d = depth_metrics(np.full(5, 12.0), np.full(5, 10.0), median_scale=False)
        assert (d.abs_rel, d.rmse, d.delta1) == (0.2, 2.0, 1.0)
        assert d.sq_rel == pytest.approx(0.4, abs=1e-15)

    def test_range_filter_and_clamp(self):
        gt = np.array([0.05, 5.0, 100.0])
        d = depth_metrics(np.array([1.0, 200.0, 1.0]), gt, median_scale=False)
        # only the middle cell counts and its prediction is clamped to d_max
        assert d.abs_rel == pytest.approx((80 - 5) / 5)

    def test_not_applicable(self):
        d = depth_metrics(np.ones(3), np.zeros(3))
        assert d.to_dict() == {k: None for k in DEPTH_FIELDS}

    def test_nonpositive_prediction(self):
        with pytest.raises(DomainError):
            depth_metrics(np.array([0.0, 1.0]), np.array([2.0, 3.0]))

    def test_bad_range(self):
        with pytest.raises(DomainError):
            depth_metrics(np.ones(2), np.ones(2), d_min=5, d_max=1)


class TestAggregation:
    def test_mean_skips_none(self):
        a = seg_metrics(np.array([0.9, 0.1]), np.array([1, 0], bool))
        b = seg_metrics(np.array([0.3]), np.array([False]))
        m = mean_scores([a, b])
        assert m["accuracy"] == 1.0 and m["ap"] == 1.0
        assert "threshold" not in m

    def test_pooled_seg(self):
        frames = [(np.array([0.9, 0.1]), np.array([1, 0], bool), None),
                  (np.array([0.8, 0.7]), np.array([0, 1], bool), None)]
        pooled = pooled_seg_metrics(frames)
        assert pooled.ap == pytest.approx(brute_force_ap([0.9, 0.1, 0.8, 0.7], [1, 0, 0, 1]))

    def test_pooled_depth_scales_per_frame(self):
        gt1, gt2 = np.linspace(1, 10, 11), np.linspace(5, 20, 11)
        d = pooled_depth_metrics([(3 * gt1, gt1, None), (0.5 * gt2, gt2, None)])
        assert d.abs_rel == pytest.approx(0, abs=1e-15)
