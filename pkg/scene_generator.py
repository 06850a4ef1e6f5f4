"""
Synthetic scenes with known clean plates, sprite masks and shadow masks.

All motion is integer pixels per frame: the background is cut from a larger
world image that slides by camera_pan each frame, sprites move by their
velocity, and shadows darken the plate inside a shifted / scaled copy of the
sprite footprint.
"""
import os
import json
import logging
from typing import List, Literal, NamedTuple, Optional, Tuple, Union

import numpy as np
import toml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator
from scipy import ndimage

from utils.errors import DecodeError, InvalidArgument, IoError
from utils.video_io import MaskSeq, VideoClip, save_frame_dir

logger = logging.getLogger(__name__)


class ShadowSpec(BaseModel):
    offset: Tuple[int, int] = (2, 8)
    scale: float = Field(1.0, gt=0)
    darkening: float = Field(0.5, gt=0, lt=1)


class SpriteSpec(BaseModel):
    shape: Literal["rect", "ellipse"] = "rect"
    size: Tuple[int, int] = (10, 10)  # (width, height)
    position: Tuple[int, int] = (0, 0)  # top-left (x, y) at frame 0
    velocity: Tuple[int, int] = (0, 0)
    color: List[float] = Field(default_factory=lambda: [0.9, 0.2, 0.2])
    texture: Literal["flat", "stripes"] = "flat"
    shadow: Optional[ShadowSpec] = None

    @field_validator("size")
    @classmethod
    def _positive(cls, size):
        if min(size) <= 0:
            raise ValueError("sprite size must be positive")
        return size

    @field_validator("color")
    @classmethod
    def _unit_color(cls, color):
        if len(color) not in (1, 3) or any(not 0.0 <= c <= 1.0 for c in color):
            raise ValueError("color needs 1 or 3 values in [0, 1]")
        return color


class SceneSpec(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    seed: int = 0
    num_frames: int = Field(24, ge=1, alias="F")
    height: int = Field(64, ge=1, alias="H")
    width: int = Field(64, ge=1, alias="W")
    channels: Literal[1, 3] = 3
    background: Literal["checker", "smooth", "gradient"] = "smooth"
    camera_pan: Tuple[int, int] = (0, 0)
    sprites: List[SpriteSpec] = Field(default_factory=list)
    checker_size: int = Field(4, ge=1)
    smooth_sigma: float = Field(4.0, gt=0)


class Scene(NamedTuple):
    clip: VideoClip
    plate: VideoClip
    sprite_masks: MaskSeq
    shadow_masks: MaskSeq


def _world(spec: SceneSpec, rng: np.random.Generator) -> np.ndarray:
    dx, dy = spec.camera_pan
    hw = spec.height + (spec.num_frames - 1) * abs(dy)
    ww = spec.width + (spec.num_frames - 1) * abs(dx)
    c = spec.channels
    yy, xx = np.mgrid[0:hw, 0:ww].astype(np.float64)

    if spec.background == "checker":
        parity = ((yy // spec.checker_size + xx // spec.checker_size) % 2)[:, :, None]
        tint = rng.uniform(0.6, 1.0, size=c)
        return (0.2 + 0.6 * parity) * tint
    if spec.background == "gradient":
        ramps = [xx / max(ww - 1, 1), yy / max(hw - 1, 1), (xx + yy) / max(ww + hw - 2, 1)]
        if c == 1:
            return (0.1 + 0.8 * ramps[2])[:, :, None]
        return np.stack([0.1 + 0.8 * r for r in ramps], axis=2)

    noise = rng.standard_normal((hw, ww, c))
    smooth = np.stack(
        [ndimage.gaussian_filter(noise[:, :, ch], spec.smooth_sigma, mode="reflect") for ch in range(c)],
        axis=2,
    )
    lo, hi = smooth.min(), smooth.max()
    return 0.1 + 0.8 * (smooth - lo) / max(hi - lo, 1e-12)


def _footprint(shape: str, x: int, y: int, w: int, h: int, height: int, width: int) -> np.ndarray:
    yy, xx = np.mgrid[0:height, 0:width]
    if shape == "rect":
        return (xx >= x) & (xx < x + w) & (yy >= y) & (yy < y + h)
    cx, cy = x + w / 2.0, y + h / 2.0
    return ((xx + 0.5 - cx) / (w / 2.0)) ** 2 + ((yy + 0.5 - cy) / (h / 2.0)) ** 2 <= 1.0


def _sprite_colour(sprite: SpriteSpec, channels: int) -> np.ndarray:
    colour = np.asarray(sprite.color, dtype=np.float64)
    if channels == 1:
        return np.array([colour.mean()])
    return np.broadcast_to(colour, (3,)).copy()


def generate_scene(spec: SceneSpec) -> Scene:
    """Render clip, clean plate, sprite masks and shadow masks; deterministic in spec.seed"""
    for sprite in spec.sprites:
        w, h = sprite.size
        if w > spec.width or h > spec.height:
            raise InvalidArgument(f"sprite {w}x{h} larger than frame {spec.width}x{spec.height}")
    rng = np.random.default_rng(spec.seed)
    world = _world(spec, rng)

    f_count, height, width, c = spec.num_frames, spec.height, spec.width, spec.channels
    dx, dy = spec.camera_pan
    ox0 = (f_count - 1) * dx if dx > 0 else 0
    oy0 = (f_count - 1) * dy if dy > 0 else 0
    yy, xx = np.mgrid[0:height, 0:width]

    plate = np.empty((f_count, height, width, c))
    clip = np.empty_like(plate)
    sprite_masks = np.zeros((f_count, height, width), dtype=bool)
    shadow_masks = np.zeros_like(sprite_masks)
    for t in range(f_count):
        ox, oy = ox0 - t * dx, oy0 - t * dy
        plate[t] = world[oy:oy + height, ox:ox + width]
        frame = plate[t].copy()

        for sprite in spec.sprites:
            if sprite.shadow is None:
                continue
            w, h = sprite.size
            sw, sh = max(1, int(round(w * sprite.shadow.scale))), max(1, int(round(h * sprite.shadow.scale)))
            x = sprite.position[0] + t * sprite.velocity[0] + sprite.shadow.offset[0]
            y = sprite.position[1] + t * sprite.velocity[1] + sprite.shadow.offset[1]
            shade = _footprint(sprite.shape, x, y, sw, sh, height, width)
            frame[shade] *= 1.0 - sprite.shadow.darkening
            shadow_masks[t] |= shade

        # painter's order: later sprites cover earlier ones
        for sprite in spec.sprites:
            w, h = sprite.size
            x = sprite.position[0] + t * sprite.velocity[0]
            y = sprite.position[1] + t * sprite.velocity[1]
            body = _footprint(sprite.shape, x, y, w, h, height, width)
            colour = _sprite_colour(sprite, c)
            if sprite.texture == "stripes":
                stripes = 0.6 + 0.4 * (((xx - x) // 2) % 2)
                frame[body] = stripes[body][:, None] * colour
            else:
                frame[body] = colour
            sprite_masks[t] |= body
        clip[t] = frame

    shadow_masks &= ~sprite_masks
    return Scene(
        VideoClip(clip),
        VideoClip(plate),
        MaskSeq(sprite_masks.astype(np.uint8)),
        MaskSeq(shadow_masks.astype(np.uint8)),
    )


def anchor_frames(masks: Union[MaskSeq, int], n_anchor: int) -> List[int]:
    """n evenly spaced frame indices i * (F - 1) // (n - 1), frame 0 included"""
    num_frames = masks if isinstance(masks, int) else masks.num_frames
    if not 1 <= n_anchor <= num_frames:
        raise InvalidArgument(f"need 1 <= n_anchor <= {num_frames}, got {n_anchor}")
    if n_anchor == 1:
        return [0]
    return [i * (num_frames - 1) // (n_anchor - 1) for i in range(n_anchor)]


def random_masks(num_frames: int, height: int, width: int, seed: int = 0,
                 count: int = 1, moving: bool = False) -> MaskSeq:
    """Seeded elliptical blob holes, stationary or moving by an integer velocity"""
    if num_frames < 1 or count < 0:
        raise InvalidArgument("need num_frames >= 1 and count >= 0")
    rng = np.random.default_rng(seed)
    data = np.zeros((num_frames, height, width), dtype=bool)
    for _ in range(count):
        w = int(rng.integers(max(2, width // 10), max(3, width // 4) + 1))
        h = int(rng.integers(max(2, height // 10), max(3, height // 4) + 1))
        x = int(rng.integers(0, max(1, width - w)))
        y = int(rng.integers(0, max(1, height - h)))
        vx, vy = (int(v) for v in rng.integers(-2, 3, size=2)) if moving else (0, 0)
        for t in range(num_frames):
            data[t] |= _footprint("ellipse", x + t * vx, y + t * vy, w, h, height, width)
    return MaskSeq(data.astype(np.uint8))


def default_suite(n: int = 10, seed: int = 0, num_frames: int = 24,
                  height: int = 64, width: int = 64) -> List[SceneSpec]:
    """n seeded scenes mixing backgrounds, camera pans and sprites with and without shadows"""
    rng = np.random.default_rng(seed)
    pans = [(0, 0), (1, 0), (-1, 0), (0, 1)]
    specs = []
    for i in range(n):
        sprites = []
        for _ in range(int(rng.integers(1, 3))):
            w, h = (int(s) for s in rng.integers(6, 13, size=2))
            sprites.append(SpriteSpec(
                shape=str(rng.choice(["rect", "ellipse"])),
                size=(w, h),
                position=(int(rng.integers(4, width - w - 4)), int(rng.integers(4, height - h - 12))),
                velocity=(int(rng.integers(-1, 2)), 0),
                color=[float(v) for v in rng.uniform(0.0, 1.0, size=3)],
                texture=str(rng.choice(["flat", "stripes"])),
                shadow=ShadowSpec(offset=(2, h - 2), scale=1.0, darkening=0.4) if rng.random() < 0.5 else None,
            ))
        specs.append(SceneSpec(
            seed=seed * 1000 + i,
            num_frames=num_frames,
            height=height,
            width=width,
            background=str(rng.choice(["smooth", "gradient"])),
            camera_pan=pans[int(rng.integers(len(pans)))],
            sprites=sprites,
            smooth_sigma=6.0,
        ))
    return specs


def load_scene_spec(file_path: str) -> SceneSpec:
    """Read a scene spec from TOML or JSON"""
    try:
        with open(file_path, "r", encoding="utf-8") as handle:
            text = handle.read()
    except OSError as e:
        raise IoError(f"Error reading scene spec {file_path}: {e}") from e
    try:
        data = json.loads(text) if file_path.lower().endswith(".json") else toml.loads(text)
    except (json.JSONDecodeError, toml.TomlDecodeError) as e:
        raise DecodeError(f"Error parsing scene spec {file_path}: {e}") from e
    try:
        return SceneSpec.model_validate(data)
    except ValidationError as e:
        raise InvalidArgument(f"Invalid scene spec {file_path}: {e}") from e


class SceneGenerator:
    def __init__(self, spec: SceneSpec):
        self.spec = spec

    def render(self) -> Scene:
        scene = generate_scene(self.spec)
        logger.info(
            f"✅ Rendered {self.spec.num_frames} frames {self.spec.width}x{self.spec.height}, "
            f"{len(self.spec.sprites)} sprites"
        )
        return scene

    def save(self, out_dir: str, extra_holes: int = 0, moving: bool = False) -> Scene:
        """
        Write frames/, masks/ (sprite + shadow), plate/, sprite_masks/ and shadow_masks/.
        `extra_holes` seeded random blobs are added to masks/ for completion runs.
        """
        scene = self.render()
        holes = scene.sprite_masks.union(scene.shadow_masks)
        if extra_holes:
            spec = self.spec
            blobs = random_masks(spec.num_frames, spec.height, spec.width, spec.seed, extra_holes, moving)
            holes = holes.union(blobs)
            logger.info(f"🔍 Added {extra_holes} random {'moving' if moving else 'static'} holes")
        save_frame_dir(scene.clip, os.path.join(out_dir, "frames"))
        save_frame_dir(holes, os.path.join(out_dir, "masks"))
        save_frame_dir(scene.plate, os.path.join(out_dir, "plate"))
        save_frame_dir(scene.sprite_masks, os.path.join(out_dir, "sprite_masks"))
        save_frame_dir(scene.shadow_masks, os.path.join(out_dir, "shadow_masks"))
        return scene
