"""
In-memory video / mask types and PNG frame-directory interchange.

Masks are stored with hole polarity (1 = remove, 0 = known). Formulas written
on a keep-map use ``known = 1 - hole`` at the call site.
"""
import os
import re
import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple, Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from config import DEFAULT_FPS, FRAME_PATTERN, MASK_THRESHOLD
from utils.errors import (
    DecodeError,
    DimensionMismatch,
    EmptyClip,
    InvalidArgument,
    IoError,
    MissingFrame,
)

logger = logging.getLogger(__name__)

_FRAME_RE = re.compile(r"^frame_(\d{5})\.png$")
_RANGE_SLACK = 1e-9


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


def _unit_range(data: np.ndarray) -> np.ndarray:
    data = np.asarray(data, dtype=np.float64)
    if not np.all(np.isfinite(data)):
        raise InvalidArgument("pixel values must be finite")
    if data.size and (data.min() < -_RANGE_SLACK or data.max() > 1.0 + _RANGE_SLACK):
        raise InvalidArgument(f"pixel values outside [0,1]: [{data.min()}, {data.max()}]")
    return np.clip(data, 0.0, 1.0)


@dataclass(frozen=True)
class Frame:
    """One H x W x C image with values in [0,1]"""
    data: np.ndarray

    def __post_init__(self):
        data = _unit_range(self.data)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3 or data.shape[2] not in (1, 3):
            raise DimensionMismatch(f"frame must be H x W x {{1,3}}, got {data.shape}")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class VideoClip:
    """F frames sharing H, W, C, stored as an (F, H, W, C) array"""
    data: np.ndarray
    fps: float = DEFAULT_FPS

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 3:
            data = data[..., None]
        if data.ndim != 4 or data.shape[0] == 0:
            raise EmptyClip(f"clip needs at least one frame, got shape {data.shape}")
        if data.shape[3] not in (1, 3):
            raise DimensionMismatch(f"clip channels must be 1 or 3, got {data.shape[3]}")
        if self.fps <= 0:
            raise InvalidArgument(f"fps must be positive, got {self.fps}")
        object.__setattr__(self, "data", _frozen(_unit_range(data)))

    @classmethod
    def from_frames(cls, frames: List[Frame], fps: float = DEFAULT_FPS) -> "VideoClip":
        if not frames:
            raise EmptyClip("clip needs at least one frame")
        shapes = {f.data.shape for f in frames}
        if len(shapes) > 1:
            raise DimensionMismatch(f"frames have mixed dimensions: {sorted(shapes)}")
        return cls(np.stack([f.data for f in frames]), fps)

    @property
    def num_frames(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def channels(self) -> int:
        return self.data.shape[3]

    @property
    def frames(self) -> List[Frame]:
        return [Frame(f) for f in self.data]

    def frame(self, index: int) -> Frame:
        return Frame(self.data[index])

    def with_data(self, data: np.ndarray) -> "VideoClip":
        return VideoClip(data, self.fps)

    def insert_frame(self, slot: int, frame: Frame) -> "VideoClip":
        if frame.data.shape != self.data.shape[1:]:
            raise DimensionMismatch(f"frame {frame.data.shape} does not fit clip {self.data.shape}")
        return self.with_data(np.concatenate([self.data[:slot], frame.data[None], self.data[slot:]]))

    def drop_frame(self, slot: int) -> "VideoClip":
        return self.with_data(np.delete(self.data, slot, axis=0))


@dataclass(frozen=True)
class MaskSeq:
    """F binary hole maps stored as an (F, H, W) uint8 array (1 = hole)"""
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 2:
            data = data[None]
        if data.ndim != 3 or data.shape[0] == 0:
            raise EmptyClip(f"mask sequence needs at least one frame, got shape {data.shape}")
        if not np.all((data == 0) | (data == 1)):
            raise InvalidArgument("mask values must be 0 or 1")
        object.__setattr__(self, "data", _frozen(data.astype(np.uint8)))

    @classmethod
    def empty_like(cls, clip: VideoClip) -> "MaskSeq":
        return cls(np.zeros(clip.data.shape[:3], dtype=np.uint8))

    @property
    def num_frames(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def known(self) -> np.ndarray:
        """Keep-map (1 = known), the polarity the formulas are written in"""
        return 1 - self.data

    def frame(self, index: int) -> np.ndarray:
        return self.data[index]

    def hole_counts(self) -> np.ndarray:
        return self.data.reshape(self.num_frames, -1).sum(axis=1)

    def union(self, other: "MaskSeq") -> "MaskSeq":
        check_pair(self, other)
        return MaskSeq(self.data | other.data)

    def insert_frame(self, slot: int, mask: np.ndarray) -> "MaskSeq":
        return MaskSeq(np.concatenate([self.data[:slot], np.asarray(mask, dtype=np.uint8)[None], self.data[slot:]]))

    def drop_frame(self, slot: int) -> "MaskSeq":
        return MaskSeq(np.delete(self.data, slot, axis=0))


def check_pair(a, b):
    """Raise DimensionMismatch unless F, H, W agree"""
    if a.data.shape[:3] != b.data.shape[:3]:
        raise DimensionMismatch(f"shapes disagree: {a.data.shape[:3]} vs {b.data.shape[:3]}")


class FrameDirProcessor:
    @staticmethod
    def list_frame_files(path: str) -> List[Tuple[int, str]]:
        """Find frame_%05d.png files and check the indices are contiguous from 0"""
        if not os.path.isdir(path):
            raise IoError(f"Not a directory: {path}")
        indexed = []
        for name in os.listdir(path):
            match = _FRAME_RE.match(name)
            if match:
                indexed.append((int(match.group(1)), os.path.join(path, name)))
        indexed.sort()
        if not indexed:
            raise EmptyClip(f"No frame files in {path}")
        for expected, (index, _) in enumerate(indexed):
            if index != expected:
                raise MissingFrame(expected)
        return indexed

    @staticmethod
    def read_png(file_path: str, mode: Optional[str] = None) -> np.ndarray:
        """Read one PNG as a uint8 array"""
        try:
            with Image.open(file_path) as image:
                if mode is not None:
                    image = image.convert(mode)
                elif image.mode not in ("L", "RGB"):
                    image = image.convert("RGB")
                return np.array(image, dtype=np.uint8)
        except (UnidentifiedImageError, OSError, SyntaxError) as e:
            raise DecodeError(f"Error reading {file_path}: {e}") from e

    @staticmethod
    def write_png(file_path: str, pixels: np.ndarray):
        """Write a uint8 H x W or H x W x 3 array as PNG"""
        try:
            Image.fromarray(np.ascontiguousarray(pixels)).save(file_path, format="PNG")
        except OSError as e:
            raise IoError(f"Error writing {file_path}: {e}") from e

    @staticmethod
    def load(path: str, kind: str = "clip", fps: float = DEFAULT_FPS) -> Union[VideoClip, MaskSeq]:
        """Load a frame directory as a VideoClip (kind='clip') or MaskSeq (kind='mask')"""
        if kind not in ("clip", "mask"):
            raise InvalidArgument(f"kind must be 'clip' or 'mask', got {kind!r}")
        files = FrameDirProcessor.list_frame_files(path)
        mode = "L" if kind == "mask" else None
        arrays = [FrameDirProcessor.read_png(file_path, mode) for _, file_path in files]
        shapes = {a.shape for a in arrays}
        if len(shapes) > 1:
            raise DimensionMismatch(f"Mixed frame dimensions in {path}: {sorted(shapes)}")
        stacked = np.stack(arrays)
        logger.info(f"✅ Loaded {len(arrays)} {kind} frames from {path}")
        if kind == "mask":
            return MaskSeq((stacked >= MASK_THRESHOLD).astype(np.uint8))
        return VideoClip(stacked.astype(np.float64) / 255.0, fps)

    @staticmethod
    def save(clip: Union[VideoClip, MaskSeq], path: str):
        """Write every frame as frame_%05d.png (masks as 0/255 grayscale)"""
        try:
            os.makedirs(path, exist_ok=True)
        except OSError as e:
            raise IoError(f"Cannot create {path}: {e}") from e
        if isinstance(clip, MaskSeq):
            frames = [(m * 255).astype(np.uint8) for m in clip.data]
        else:
            frames = [to_uint8(f) for f in clip.data]
        for index, pixels in enumerate(frames):
            FrameDirProcessor.write_png(os.path.join(path, FRAME_PATTERN % index), pixels)
        logger.info(f"✅ Saved {len(frames)} frames to {path}")


def to_uint8(pixels: np.ndarray) -> np.ndarray:
    """Quantize [0,1] pixels to 8 bits, dropping a singleton channel axis"""
    quantized = np.floor(np.clip(pixels, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    if quantized.ndim == 3 and quantized.shape[2] == 1:
        quantized = quantized[:, :, 0]
    return quantized


def save_image(pixels: np.ndarray, file_path: str):
    """Save a single [0,1] image (H x W or H x W x C) as PNG"""
    parent = os.path.dirname(file_path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    FrameDirProcessor.write_png(file_path, to_uint8(np.asarray(pixels, dtype=np.float64)))


def load_frame_dir(path: str, kind: str = "clip", fps: float = DEFAULT_FPS):
    return FrameDirProcessor.load(path, kind, fps)


def save_frame_dir(clip, path: str):
    FrameDirProcessor.save(clip, path)


def apply_mask(clip: VideoClip, holes: MaskSeq) -> VideoClip:
    """X ⊙ M with M = 1 - hole: hole pixels become 0, known pixels pass through"""
    check_pair(clip, holes)
    return clip.with_data(clip.data * holes.known[..., None])


def downscale_mask(holes: MaskSeq, factor: int) -> np.ndarray:
    """
    Area-average the keep-map over factor x factor blocks.

    Returns an (F, ceil(H/f), ceil(W/f)) soft known-map in [0,1]. Dimensions
    that are not multiples of the factor are padded with hole = 1 first.
    """
    if factor <= 0:
        raise InvalidArgument(f"factor must be positive, got {factor}")
    padded = pad_mask(holes, factor)
    f, h, w = padded.data.shape
    known = padded.known.astype(np.float64)
    return known.reshape(f, h // factor, factor, w // factor, factor).mean(axis=(2, 4))


def _pad_amounts(height: int, width: int, multiple: int) -> Tuple[int, int]:
    return (-height) % multiple, (-width) % multiple


def pad_mask(holes: MaskSeq, multiple: int) -> MaskSeq:
    """Pad bottom/right with hole = 1 so H, W are multiples of `multiple`"""
    pad_h, pad_w = _pad_amounts(holes.height, holes.width, multiple)
    if pad_h == 0 and pad_w == 0:
        return holes
    return MaskSeq(np.pad(holes.data, ((0, 0), (0, pad_h), (0, pad_w)), constant_values=1))


def pad_clip(clip: VideoClip, multiple: int) -> VideoClip:
    """Pad bottom/right by edge replication so H, W are multiples of `multiple`"""
    pad_h, pad_w = _pad_amounts(clip.height, clip.width, multiple)
    if pad_h == 0 and pad_w == 0:
        return clip
    return clip.with_data(np.pad(clip.data, ((0, 0), (0, pad_h), (0, pad_w), (0, 0)), mode="edge"))


def crop(item, height: int, width: int):
    """Crop a padded VideoClip or MaskSeq back to height x width"""
    if isinstance(item, MaskSeq):
        return MaskSeq(item.data[:, :height, :width])
    return item.with_data(item.data[:, :height, :width])
