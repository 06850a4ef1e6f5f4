#!/usr/bin/env python3
"""
Tests for the fixed linear latent codec
"""

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from utils.errors import DimensionMismatch, InvalidLatent
from utils.latent_codec import ANALYSIS, SYNTHESIS, LatentClip, decode, decode_raw, encode
from utils.video_io import VideoClip


def _ramp_clip(height=16, width=24, channels=3):
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    planes = [0.1 + 0.02 * xx + 0.01 * yy, 0.8 - 0.015 * yy, 0.3 + 0.005 * (xx + yy)][:channels]
    return VideoClip(np.stack(planes, axis=-1)[None])


def test_basis_is_orthogonal():
    gram = np.einsum("aij,bij->ab", ANALYSIS, SYNTHESIS)
    assert np.allclose(gram, np.eye(4), atol=1e-12)
    assert ANALYSIS[0, 0, 0] == pytest.approx(1 / 64)


def test_linear_ramp_reproduced_exactly():
    clip = _ramp_clip()
    decoded = decode(encode(clip))
    assert np.max(np.abs(decoded.data - clip.data)) < 1e-6
    print("✅ Global ramp survives encode/decode")


def test_latent_shape():
    lat = encode(_ramp_clip(16, 24, 3))
    assert lat.data.shape == (1, 12, 2, 3)
    assert lat.source_channels == 3
    assert (lat.height, lat.width) == (16, 24)


def test_encode_is_linear():
    rng = np.random.default_rng(0)
    a = VideoClip(rng.uniform(0, 0.5, size=(2, 16, 16, 3)))
    b = VideoClip(rng.uniform(0, 0.5, size=(2, 16, 16, 3)))
    both = VideoClip(a.data + b.data)
    assert np.allclose(encode(both).data, encode(a).data + encode(b).data, atol=1e-12)


def test_projection_is_idempotent():
    clip = VideoClip(np.random.default_rng(3).uniform(0.2, 0.8, size=(2, 16, 16, 1)))
    once = encode(clip)
    again = encode(VideoClip(np.clip(decode_raw(once), 0, 1)))
    # reconstructions of mid-range data stay inside [0,1], so the clip is a no-op
    assert np.max(np.abs(again.data - once.data)) < 1e-6


def test_odd_sizes_are_padded_and_cropped():
    clip = _ramp_clip(10, 13, 3)
    lat = encode(clip)
    assert lat.grid == (2, 2)
    assert decode(lat).data.shape == clip.data.shape


def test_non_finite_latent_rejected():
    data = np.zeros((1, 4, 1, 1))
    data[0, 0, 0, 0] = np.inf
    with pytest.raises(InvalidLatent):
        decode_raw(LatentClip(data))


def test_channel_count_checked():
    with pytest.raises(DimensionMismatch):
        LatentClip(np.zeros((1, 5, 2, 2)))


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
