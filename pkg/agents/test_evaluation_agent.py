#!/usr/bin/env python3
"""
Tests for PSNR, SSIM, warping error, temporal flicker, seam score and Y-T slices
"""

import os
import sys
import tempfile

import numpy as np
import pytest
from pydantic import ValidationError

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from agents.evaluation_agent import (
    EvaluationAgent,
    Report,
    psnr,
    seam_score,
    ssim,
    temporal_flicker,
    warping_error,
    yt_slice,
)
from agents.flow_agent import FlowField
from agents.fusion_agent import plan_segments
from utils.errors import DimensionMismatch, InvalidArgument, PlanViolation
from utils.video_io import VideoClip


def _constant(values, shape=(16, 16, 3)):
    return VideoClip(np.stack([np.full(shape, v) for v in values]))


def _zero_flows(num_frames, shape=(16, 16)):
    flows = {}
    for t in range(num_frames - 1):
        flows[(t + 1, t)] = FlowField.zeros(t + 1, t, *shape)
        flows[(t, t + 1)] = FlowField.zeros(t, t + 1, *shape)
    return flows


def test_psnr_closed_forms():
    a = _constant([0.5, 0.5])
    assert psnr(a, a) == 99.0
    assert psnr(a, _constant([0.5 + 1 / 255] * 2)) == pytest.approx(20 * np.log10(255), abs=1e-6)
    assert psnr(a, _constant([0.6, 0.6])) == pytest.approx(20.0, abs=1e-6)
    with pytest.raises(DimensionMismatch):
        psnr(a, _constant([0.5]))


def test_psnr_decreases_with_noise():
    rng = np.random.default_rng(0)
    base = VideoClip(rng.uniform(0.3, 0.7, size=(2, 16, 16, 3)))
    noise = rng.standard_normal(base.data.shape)
    scores = [psnr(base, VideoClip(np.clip(base.data + amp * noise, 0, 1))) for amp in (0.01, 0.02, 0.05, 0.1)]
    assert all(x > y for x, y in zip(scores, scores[1:]))


def test_ssim_identities():
    rng = np.random.default_rng(1)
    a = VideoClip(rng.uniform(size=(2, 16, 16, 3)))
    b = VideoClip(rng.uniform(size=(2, 16, 16, 3)))
    assert ssim(a, a) == pytest.approx(1.0)
    assert ssim(a, b) == pytest.approx(ssim(b, a))
    assert ssim(a, b) <= 1.0


def test_ssim_constant_images():
    c1 = 0.01 ** 2
    assert ssim(_constant([0.0]), _constant([1.0])) == pytest.approx(c1 / (1 + c1), rel=1e-6)
    gray = VideoClip(np.zeros((1, 16, 16, 1)))
    assert ssim(gray, gray) == pytest.approx(1.0)


def test_ssim_needs_window_sized_frames():
    small = _constant([0.5], shape=(8, 8, 3))
    with pytest.raises(InvalidArgument):
        ssim(small, small)


def test_warping_error_closed_forms():
    static = _constant([0.4, 0.4, 0.4])
    assert warping_error(static, _zero_flows(3)) == 0.0
    stepped = _constant([0.2, 0.3])
    assert warping_error(stepped, _zero_flows(2)) == pytest.approx(0.01 * 1e3)


def test_warping_error_on_translation():
    rng = np.random.default_rng(2)
    first = rng.uniform(size=(16, 16, 1))
    second = np.roll(first, 1, axis=1)
    clip = VideoClip(np.stack([first, second]))
    flow = FlowField(1, 0, np.full((16, 16), -1.0), np.zeros((16, 16)), np.ones((16, 16)))
    assert warping_error(clip, {(1, 0): flow}) < 1e-12


def test_zero_coverage_warns():
    clip = _constant([0.2, 0.8])
    flow = FlowField(1, 0, np.zeros((16, 16)), np.zeros((16, 16)), np.zeros((16, 16)))
    warnings = []
    assert warping_error(clip, {(1, 0): flow}, warnings) == 0.0
    assert len(warnings) == 1


def test_uncovered_pair_counts_as_zero_in_mean():
    clip = _constant([0.2, 0.4, 0.9])
    shape = (16, 16)
    covered = FlowField(1, 0, np.zeros(shape), np.zeros(shape), np.ones(shape))
    uncovered = FlowField(2, 1, np.zeros(shape), np.zeros(shape), np.zeros(shape))
    warnings = []
    error = warping_error(clip, {(1, 0): covered, (2, 1): uncovered}, warnings)
    assert error == pytest.approx((0.2 ** 2 + 0.0) / 2 * 1e3)
    assert len(warnings) == 1


def test_temporal_flicker_closed_forms():
    assert temporal_flicker(_constant([0.3, 0.3, 0.3])) == pytest.approx(100.0)
    assert temporal_flicker(_constant([0.0, 1.0, 0.0])) == pytest.approx(0.0)
    assert temporal_flicker(_constant([0.5, 0.55])) == pytest.approx(95.0)
    with pytest.raises(InvalidArgument):
        temporal_flicker(_constant([0.5]))


def test_temporal_flicker_static_mask_and_noise():
    rng = np.random.default_rng(3)
    plate = VideoClip(np.tile(rng.uniform(0.2, 0.8, size=(1, 16, 16, 3)), (6, 1, 1, 1)))
    noisy = VideoClip(np.clip(plate.data + 0.05 * rng.standard_normal(plate.data.shape), 0, 1))
    assert temporal_flicker(plate) >= temporal_flicker(noisy)
    moving = plate.data.copy()
    moving[1::2, :8] = 0.0
    static = np.zeros((16, 16), dtype=bool)
    static[8:] = True
    assert temporal_flicker(VideoClip(moving), static) == pytest.approx(100.0)


def test_seam_score():
    plan = plan_segments(48)
    assert seam_score(np.zeros((48, 4)), plan) == 0.0
    stepped = np.zeros((48, 4))
    first = plan.boundaries[0]
    stepped[first:] = 1.0
    assert seam_score(stepped, plan) == pytest.approx(1.0 / len(plan.boundaries))
    off_boundary = np.zeros((48, 4))
    off_boundary[3:] = 1.0
    assert seam_score(off_boundary, plan) == 0.0
    assert seam_score(np.zeros((20, 4)), plan_segments(20)) == 0.0
    with pytest.raises(PlanViolation):
        seam_score(np.zeros((10, 4)), plan)


def test_yt_slice():
    static = _constant([0.1, 0.1, 0.1])
    image = yt_slice(static, 4)
    assert image.shape == (3, 16, 3)
    assert np.all(image == image[0])
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "slice.png")
        yt_slice(static, 0, path)
        assert os.path.exists(path)
    with pytest.raises(InvalidArgument):
        yt_slice(static, 16)


def test_report_rejects_non_finite():
    with pytest.raises(ValidationError):
        Report(psnr=float("nan"))
    assert Report().tf == 100.0


def test_agent_evaluate():
    clip = _constant([0.4, 0.4, 0.4])
    report = EvaluationAgent().evaluate(clip, _zero_flows(3), plate=clip, fusion_ops=2, runtime_ms=5.0)
    assert report.psnr == 99.0
    assert report.ssim == pytest.approx(1.0)
    assert report.e_warp_x1e3 == 0.0 and report.tf == pytest.approx(100.0)
    assert report.per_frame["psnr"] == [99.0, 99.0, 99.0]
    assert report.fusion_ops == 2
    no_plate = EvaluationAgent().evaluate(clip, _zero_flows(3))
    assert no_plate.psnr is None and no_plate.ssim is None
    print("✅ Report assembled")


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
