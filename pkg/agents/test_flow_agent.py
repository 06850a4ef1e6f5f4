#!/usr/bin/env python3
"""
Tests for block-matching flow, warping, pixel propagation and harmonic fill
"""

import os
import sys
import tempfile

import numpy as np
import pytest
from scipy import ndimage

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from agents.flow_agent import (
    FlowCompletionAgent,
    FlowField,
    estimate_clip_flows,
    estimate_flow,
    fill_clip,
    fill_holes,
    load_flow,
    propagate_pixels,
    save_flow,
    warp,
)
from scene_generator import SceneSpec, SpriteSpec, generate_scene
from utils.errors import DecodeError, DimensionMismatch, InvalidArgument
from utils.video_io import MaskSeq, VideoClip


def _texture(seed=0, shape=(32, 32, 3)):
    return np.random.default_rng(seed).uniform(0.05, 0.95, size=shape)


def _const_flow(u, v, shape, from_index=0, to_index=1):
    return FlowField(from_index, to_index, np.full(shape, float(u)), np.full(shape, float(v)),
                     np.ones(shape, dtype=np.uint8))


def _pan_scene():
    spec = SceneSpec(
        seed=2, F=20, H=32, W=32, background="smooth", camera_pan=(1, 0),
        sprites=[SpriteSpec(size=(8, 8), position=(12, 12))],
    )
    return generate_scene(spec)


def test_integer_shift_recovered():
    a = _texture()
    b = np.roll(a, shift=(1, 2), axis=(0, 1))
    flow = estimate_flow(a, b)
    assert np.all(flow.u == 2) and np.all(flow.v == 1)
    assert np.all(flow.valid == 1)
    print("✅ Block matching finds the (2, 1) shift")


def test_zero_motion_prefers_zero():
    a = _texture(1)
    flow = estimate_flow(a, a)
    assert np.all(flow.u == 0) and np.all(flow.v == 0)


def test_blocks_touching_holes_are_invalid():
    a = _texture(2)
    hole = np.zeros((32, 32), dtype=bool)
    hole[3, 3] = True
    flow = estimate_flow(a, a, exclude=hole)
    assert np.all(flow.valid[:8, :8] == 0)
    assert np.all(flow.valid[8:, :] == 1)
    with pytest.raises(DimensionMismatch):
        estimate_flow(a, a[:16])


def test_warp_undoes_translation():
    a = _texture(3)
    b = np.roll(a, shift=(1, 2), axis=(0, 1))
    warped, coverage = warp(b, _const_flow(2, 1, (32, 32)))
    covered = coverage.astype(bool)
    assert covered[:31, :30].all() and not covered[31].any() and not covered[:, 30:].any()
    assert np.max(np.abs(warped.data[covered] - a[covered])) < 1e-12


def test_hole_pixel_copied_from_neighbour_frame():
    frame = _texture(4, (16, 16, 1))
    clip = VideoClip(np.stack([frame] * 3))
    holes = np.zeros((3, 16, 16), dtype=np.uint8)
    holes[1, 5:8, 6:9] = 1
    flows = {}
    for t in range(2):
        flows[(t, t + 1)] = FlowField.zeros(t, t + 1, 16, 16)
        flows[(t + 1, t)] = FlowField.zeros(t + 1, t, 16, 16)
    completed, residual = propagate_pixels(clip, MaskSeq(holes), flows)
    assert np.array_equal(completed.data, clip.data)
    assert not residual.data.any()


def test_camera_pan_recovers_plate_exactly():
    scene = _pan_scene()
    holes = scene.sprite_masks
    flows = estimate_clip_flows(scene.clip, holes)
    completed, residual = propagate_pixels(scene.clip, holes, flows)
    recovered = holes.data.astype(bool) & ~residual.data.astype(bool)
    assert recovered.sum() > 0.9 * holes.data.sum()
    assert np.max(np.abs(completed.data[recovered] - scene.plate.data[recovered])) <= 1e-6
    assert not residual.data[10].any()
    # outside the hole nothing changes
    known = ~holes.data.astype(bool)
    assert np.array_equal(completed.data[known], scene.clip.data[known])


def test_max_chain_zero_leaves_everything():
    scene = _pan_scene()
    flows = estimate_clip_flows(scene.clip, scene.sprite_masks)
    _, residual = propagate_pixels(scene.clip, scene.sprite_masks, flows, max_chain=0)
    assert np.array_equal(residual.data, scene.sprite_masks.data)


def test_missing_flows_rejected():
    clip = VideoClip(np.zeros((2, 8, 8, 1)))
    holes = MaskSeq(np.ones((2, 8, 8), dtype=np.uint8))
    with pytest.raises(InvalidArgument):
        propagate_pixels(clip, holes, {})


def test_harmonic_fill_reproduces_linear_ramp():
    yy, xx = np.mgrid[0:20, 0:20].astype(np.float64)
    ramp = (0.1 + 0.02 * xx + 0.015 * yy)[:, :, None]
    hole = np.zeros((20, 20), dtype=bool)
    hole[6:12, 7:13] = True
    damaged = ramp.copy()
    damaged[hole] = 0.0
    result = fill_holes(damaged, hole)
    assert not result.fallback and result.iterations > 0
    assert np.max(np.abs(result.frame.data - ramp)) < 5e-3
    assert np.array_equal(result.frame.data[~hole], ramp[~hole])


def test_harmonic_fill_stays_within_boundary_range():
    frame = _texture(2, (20, 20, 3))
    hole = np.zeros((20, 20), dtype=bool)
    hole[4:15, 5:9] = True
    hole[10:13, 9:16] = True
    boundary = ndimage.binary_dilation(hole, structure=ndimage.generate_binary_structure(2, 1)) & ~hole
    filled = fill_holes(frame, hole).frame.data
    for ch in range(3):
        low, high = frame[boundary, ch].min(), frame[boundary, ch].max()
        assert np.all(filled[hole, ch] >= low - 1e-12)
        assert np.all(filled[hole, ch] <= high + 1e-12)


def test_harmonic_fill_constant_boundary_and_single_pixel():
    frame = np.full((12, 12, 1), 0.25)
    hole = np.zeros((12, 12), dtype=bool)
    hole[3:9, 2:7] = True
    frame[hole] = 0.9
    assert np.all(fill_holes(frame, hole).frame.data[hole] == 0.25)

    cross = np.array([[0.7, 0.0, 0.3], [0.0, 0.8, 1.0], [0.2, 1.0, 0.6]])[:, :, None]
    centre = np.zeros((3, 3), dtype=bool)
    centre[1, 1] = True
    assert fill_holes(cross, centre).frame.data[1, 1, 0] == pytest.approx(0.5)


def test_fill_edge_cases():
    frame = _texture(5, (8, 8, 3))
    untouched = fill_holes(frame, np.zeros((8, 8), dtype=bool))
    assert np.array_equal(untouched.frame.data, frame)
    everything = fill_holes(frame, np.ones((8, 8), dtype=bool))
    assert everything.fallback
    assert np.all(everything.frame.data == 0.5)
    clip = VideoClip(np.stack([frame, frame]))
    holes = MaskSeq(np.stack([np.ones((8, 8)), np.zeros((8, 8))]).astype(np.uint8))
    _, fallback = fill_clip(clip, holes)
    assert fallback == [0]


def test_flow_file_round_trip():
    rng = np.random.default_rng(6)
    flow = FlowField(3, 4, rng.normal(size=(5, 7)).astype(np.float32), rng.normal(size=(5, 7)).astype(np.float32),
                     rng.integers(0, 2, size=(5, 7)))
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "flow.flo")
        save_flow(flow, path)
        loaded = load_flow(path)
        assert (loaded.from_index, loaded.to_index) == (3, 4)
        assert np.array_equal(loaded.u, flow.u) and np.array_equal(loaded.valid, flow.valid)
        with open(path, "rb") as handle:
            raw = handle.read()
        with open(path, "wb") as handle:
            handle.write(raw[:-3])
        with pytest.raises(DecodeError):
            load_flow(path)


def test_flow_field_validation():
    with pytest.raises(InvalidArgument):
        FlowField(0, 1, np.full((2, 2), np.nan), np.zeros((2, 2)), np.ones((2, 2)))
    with pytest.raises(DimensionMismatch):
        FlowField(0, 1, np.zeros((2, 2)), np.zeros((2, 3)), np.ones((2, 2)))


def test_agent_runs_all_steps():
    scene = _pan_scene()
    agent = FlowCompletionAgent(threads=2)
    flows = agent.estimate(scene.clip, scene.sprite_masks)
    assert len(flows) == 2 * (scene.clip.num_frames - 1)
    completed, residual = agent.propagate(scene.clip, scene.sprite_masks, flows)
    filled, fallback = agent.fill(completed, residual)
    assert fallback == []
    assert agent.calls == {"estimate": 1, "propagate": 1, "fill": 1}
    assert filled.data.shape == scene.clip.data.shape


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
