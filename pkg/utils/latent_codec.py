"""
Fixed linear codec standing in for the VAE.

Each 8x8 block of each image channel is described by four functionals on
centred block coordinates x, y in [-7/8, 7/8]:

    0: block mean                    coefficient of 1
    1: horizontal gradient           <B, x>  / <x, x>
    2: vertical gradient             <B, y>  / <y, y>
    3: diagonal moment               <B, xy> / <xy, xy>

The basis {1, x, y, xy} is orthogonal on the 8x8 grid, so decode is the
bilinear reconstruction m + gx*x + gy*y + gxy*x*y and decode(encode(.)) is an
orthogonal projection onto block-wise bilinear images.
"""
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from config import DEFAULT_FPS, LATENT_FACTOR, LATENT_FUNCTIONALS
from utils.errors import DimensionMismatch, InvalidLatent
from utils.video_io import VideoClip, crop, pad_clip


def _basis(factor: int) -> np.ndarray:
    centred = (np.arange(factor) - (factor - 1) / 2.0) / (factor / 2.0)
    y, x = np.meshgrid(centred, centred, indexing="ij")
    return np.stack([np.ones_like(x), x, y, x * y])


SYNTHESIS = _basis(LATENT_FACTOR)  # (4, 8, 8): reconstruction patterns
ANALYSIS = SYNTHESIS / (SYNTHESIS ** 2).sum(axis=(1, 2), keepdims=True)  # k0 = 1 / 64 per pixel


@dataclass(frozen=True)
class LatentClip:
    """(F, 4*C, h, w) latent tensor plus the pixel geometry it came from"""
    data: np.ndarray
    source_channels: int = 1
    height: int = 0
    width: int = 0

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 4:
            raise DimensionMismatch(f"latent must be (F, c, h, w), got {data.shape}")
        if data.shape[1] != LATENT_FUNCTIONALS * self.source_channels:
            raise DimensionMismatch(
                f"latent channels {data.shape[1]} != {LATENT_FUNCTIONALS} x {self.source_channels}"
            )
        object.__setattr__(self, "data", data)
        if not self.height:
            object.__setattr__(self, "height", data.shape[2] * LATENT_FACTOR)
        if not self.width:
            object.__setattr__(self, "width", data.shape[3] * LATENT_FACTOR)

    @property
    def num_frames(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return self.data.shape[1]

    @property
    def grid(self) -> Tuple[int, int]:
        return self.data.shape[2], self.data.shape[3]

    def with_data(self, data: np.ndarray) -> "LatentClip":
        return LatentClip(data, self.source_channels, self.height, self.width)

    def drop_frame(self, slot: int) -> "LatentClip":
        return self.with_data(np.delete(self.data, slot, axis=0))


def encode(clip: VideoClip) -> LatentClip:
    """Frame-wise linear encode; H, W padded by edge replication to multiples of 8"""
    padded = pad_clip(clip, LATENT_FACTOR)
    f, hh, ww, c = padded.data.shape
    k = LATENT_FACTOR
    blocks = padded.data.reshape(f, hh // k, k, ww // k, k, c)
    # latent[f, n, c, bh, bw] with n the functional index
    coeffs = np.einsum("fhiwjc,nij->fnchw", blocks, ANALYSIS)
    data = coeffs.reshape(f, LATENT_FUNCTIONALS * c, hh // k, ww // k)
    return LatentClip(data, c, clip.height, clip.width)


def decode_raw(lat: LatentClip) -> np.ndarray:
    """Bilinear block reconstruction without clamping or cropping, (F, H', W', C)"""
    if not np.all(np.isfinite(lat.data)):
        raise InvalidLatent("latent contains non-finite values")
    f, _, h, w = lat.data.shape
    c = lat.source_channels
    k = LATENT_FACTOR
    coeffs = lat.data.reshape(f, LATENT_FUNCTIONALS, c, h, w)
    blocks = np.einsum("fnchw,nij->fhiwjc", coeffs, SYNTHESIS)
    return blocks.reshape(f, h * k, w * k, c)


def decode(lat: LatentClip, fps: float = DEFAULT_FPS) -> VideoClip:
    """Reconstruct pixels, clamp to [0,1] and crop the codec padding"""
    pixels = np.clip(decode_raw(lat), 0.0, 1.0)
    return crop(VideoClip(pixels, fps), lat.height, lat.width)
