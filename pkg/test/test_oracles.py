import pytest
import numpy as np

from triggerxai import oracles
from triggerxai.detection import Box, nms
from triggerxai.fixtures import brute_force_iou_raster
from triggerxai.labeling import DiseaseLabel, LfWeights, aggregate
from triggerxai.numeric import iou_binary
from triggerxai.preprocessing import otsu_threshold


VOTES = list(DiseaseLabel)


def test_aggregate_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        votes = [VOTES[i] for i in rng.integers(0, len(VOTES), size=4)]
        weights = [float(w) for w in rng.integers(1, 4, size=4)]
        label, score, tie = aggregate(votes, LfWeights(weights=weights))
        ref_label, ref_score, ref_tie = oracles.brute_force_vote([v.value for v in votes], weights)
        assert label.value == ref_label
        assert score == pytest.approx(ref_score)
        assert tie == ref_tie


def test_nms_matches_brute_force():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        n = int(rng.integers(0, 7))
        boxes = [
            Box(
                float(rng.integers(0, 6)), float(rng.integers(0, 6)),
                float(rng.integers(1, 5)), float(rng.integers(1, 5)),
                float(rng.integers(1, 5)) / 4, int(rng.integers(0, 2)),
            )
            for _ in range(n)
        ]
        threshold = float(rng.choice([0.25, 0.5, 0.75]))
        assert nms(boxes, threshold) == oracles.brute_force_nms(boxes, threshold)


def test_otsu_matches_brute_force():
    rng = np.random.default_rng(2)
    checked = 0
    for _ in range(1000):
        levels = int(rng.choice([4, 8, 16]))
        shape = tuple(rng.integers(2, 6, size=2))
        q = rng.integers(0, levels, size=shape)
        if len(np.unique(q)) < 2:
            with pytest.raises(ValueError):
                otsu_threshold(q / (levels - 1), levels)
            continue
        gray = q / (levels - 1)
        assert otsu_threshold(gray, levels) == oracles.brute_force_otsu(gray.tolist(), levels)
        checked += 1
    assert checked > 900


def test_iou_matches_raster_count():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        shape = tuple(rng.integers(1, 7, size=2))
        a = (rng.random(shape) < rng.random()).astype(float)
        b = (rng.random(shape) < rng.random()).astype(float)
        assert iou_binary(a, b) == pytest.approx(brute_force_iou_raster(a, b))
