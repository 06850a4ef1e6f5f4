"""
Instance masks, shadow-to-human pairing, anchor mask propagation and dilation.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy import ndimage

from agents.flow_agent import candidate_displacements
from config import DILATION_RADIUS, FLOW_DEFAULTS, PAIRING_DEFAULTS
from utils.errors import DimensionMismatch, InvalidArgument
from utils.video_io import MaskSeq, VideoClip

logger = logging.getLogger(__name__)

Kind = Literal["human", "shadow", "belonging"]


@dataclass(frozen=True)
class InstanceMask:
    frame_index: int
    pixels: np.ndarray
    kind: Kind = "human"

    def __post_init__(self):
        pixels = np.asarray(self.pixels)
        if pixels.ndim != 2:
            raise DimensionMismatch(f"instance mask must be H x W, got {pixels.shape}")
        object.__setattr__(self, "pixels", pixels.astype(bool))

    @property
    def area(self) -> int:
        return int(self.pixels.sum())

    @property
    def bbox(self) -> Optional[Tuple[int, int, int, int]]:
        """Tight (x0, y0, x1, y1) box, x1 / y1 exclusive; None when empty"""
        ys, xs = np.nonzero(self.pixels)
        if len(ys) == 0:
            return None
        return int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1

    @property
    def centroid(self) -> Tuple[float, float]:
        ys, xs = np.nonzero(self.pixels)
        return float(xs.mean() + 0.5), float(ys.mean() + 0.5)


class PairingParams(BaseModel):
    area_ratio_min: float = Field(PAIRING_DEFAULTS["area_ratio_min"], gt=0)
    area_ratio_max: float = Field(PAIRING_DEFAULTS["area_ratio_max"], gt=0)
    lower_band_fraction: float = Field(PAIRING_DEFAULTS["lower_band_fraction"], gt=0, le=1)
    touch_margin: float = Field(PAIRING_DEFAULTS["touch_margin"], ge=0)

    @model_validator(mode="after")
    def _ordered(self) -> "PairingParams":
        if self.area_ratio_min >= self.area_ratio_max:
            raise ValueError("area_ratio_min must be smaller than area_ratio_max")
        return self


@dataclass
class PairingResult:
    pairs: List[Tuple[InstanceMask, InstanceMask]] = field(default_factory=list)
    unpaired: List[InstanceMask] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)


def _same_frame(masks: Sequence[InstanceMask]):
    frames = {m.frame_index for m in masks}
    shapes = {m.pixels.shape for m in masks}
    if len(frames) > 1:
        raise InvalidArgument(f"masks come from different frames: {sorted(frames)}")
    if len(shapes) > 1:
        raise DimensionMismatch(f"masks have different dimensions: {sorted(shapes)}")


def _band_overlap(human: InstanceMask, shadow: InstanceMask, params: PairingParams) -> int:
    """
    Shadow pixels meeting the lower band of the human box, grown by the touch
    margin. Pixel (r, c) covers [r, r+1) x [c, c+1) so the test scales with k.
    """
    x0, y0, x1, y1 = human.bbox
    m = params.touch_margin
    top = y1 - params.lower_band_fraction * (y1 - y0) - m
    bottom = y1 + 2 * m
    left, right = x0 - m, x1 + m
    ys, xs = np.nonzero(shadow.pixels)
    inside = (ys + 1 > top) & (ys < bottom) & (xs + 1 > left) & (xs < right)
    return int(inside.sum())


def pair_shadows(humans: Sequence[InstanceMask], shadows: Sequence[InstanceMask],
                 params: Optional[PairingParams] = None) -> PairingResult:
    """
    Pair each shadow with at most one human: the area ratio must lie in
    [area_ratio_min, area_ratio_max] and the shadow must meet the human's
    lower band. Ties go to the largest overlap, then the nearest centroid.
    """
    params = params or PairingParams()
    _same_frame(list(humans) + list(shadows))
    result = PairingResult()

    usable = []
    for human in humans:
        if human.area == 0:
            message = f"empty human mask in frame {human.frame_index} skipped"
            logger.warning(f"⚠️ {message}")
            result.warnings.append(message)
        else:
            usable.append(human)

    for shadow in shadows:
        best = None
        for order, human in enumerate(usable if shadow.area else ()):
            ratio = shadow.area / human.area
            if not params.area_ratio_min <= ratio <= params.area_ratio_max:
                continue
            overlap = _band_overlap(human, shadow, params)
            if overlap == 0:
                continue
            (hx, hy), (sx, sy) = human.centroid, shadow.centroid
            key = (-overlap, float(np.hypot(hx - sx, hy - sy)), order)
            if best is None or key < best[0]:
                best = (key, human)
        if best is None:
            result.unpaired.append(shadow)
        else:
            result.pairs.append((best[1], shadow))
    return result


def merge_instance(human: InstanceMask, shadow: Optional[InstanceMask] = None,
                   belongings: Sequence[InstanceMask] = ()) -> InstanceMask:
    parts = [human] + ([shadow] if shadow is not None else []) + list(belongings)
    _same_frame(parts)
    union = np.zeros_like(human.pixels)
    for part in parts:
        union |= part.pixels
    return InstanceMask(human.frame_index, union, "human")


def dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    """Binary dilation by a (2r+1) x (2r+1) square; pixels beyond the border count as 0"""
    if radius < 0:
        raise InvalidArgument(f"dilation radius must be >= 0, got {radius}")
    mask = np.asarray(mask).astype(bool)
    if radius == 0:
        return mask.copy()
    structure = np.ones((2 * radius + 1, 2 * radius + 1), dtype=bool)
    return ndimage.binary_dilation(mask, structure=structure)


def instances_from_mask(mask: np.ndarray, frame_index: int, kind: Kind = "human") -> List[InstanceMask]:
    """Split a binary map into 8-connected InstanceMasks, in label order"""
    labels, count = ndimage.label(np.asarray(mask).astype(bool), structure=np.ones((3, 3), dtype=bool))
    return [InstanceMask(frame_index, labels == i, kind) for i in range(1, count + 1)]


def _warp_nearest(mask: np.ndarray, flow) -> np.ndarray:
    """mask lives in flow.to_index; result lives in flow.from_index"""
    h, w = mask.shape
    ys, xs = np.mgrid[0:h, 0:w]
    usable = flow.valid == 1
    sy = np.rint(ys + np.where(usable, flow.v, 0.0)).astype(np.int64)
    sx = np.rint(xs + np.where(usable, flow.u, 0.0)).astype(np.int64)
    inside = (sy >= 0) & (sy < h) & (sx >= 0) & (sx < w)
    out = np.zeros_like(mask)
    out[inside] = mask[sy[inside], sx[inside]]
    return out


def _pixels_of(mask) -> np.ndarray:
    return mask.pixels if isinstance(mask, InstanceMask) else np.asarray(mask).astype(bool)


def _anchor_maps(anchors, shape: Tuple[int, int]) -> Dict[int, np.ndarray]:
    maps: Dict[int, np.ndarray] = {}
    for index, mask in anchors:
        pixels = _pixels_of(mask)
        if pixels.shape != shape:
            raise DimensionMismatch(f"anchor mask {pixels.shape} does not match clip {shape}")
        maps[int(index)] = maps.get(int(index), np.zeros(shape, dtype=bool)) | pixels
    return maps


def track_displacement(a: np.ndarray, b: np.ndarray, mask: np.ndarray,
                       radius: int = FLOW_DEFAULTS["radius"]) -> Tuple[int, int]:
    """
    Integer (u, v) carrying the masked pixels of a onto b.

    Candidates are scored by the mean absolute difference over the mask's
    own footprint, so the object's motion wins over the background's. A
    candidate needs at least half of the footprint to land inside b; ties
    go to the smaller displacement. An empty mask does not move.
    """
    a = a[:, :, None] if a.ndim == 2 else a
    b = b[:, :, None] if b.ndim == 2 else b
    ys, xs = np.nonzero(mask)
    if ys.size == 0:
        return 0, 0
    h, w = mask.shape
    source = a[ys, xs]
    best, best_score = (0, 0), np.inf
    for du, dv in candidate_displacements(radius):
        ty, tx = ys + dv, xs + du
        inside = (ty >= 0) & (ty < h) & (tx >= 0) & (tx < w)
        if 2 * inside.sum() < ys.size:
            continue
        score = np.abs(b[ty[inside], tx[inside]] - source[inside]).mean()
        if score < best_score:
            best, best_score = (du, dv), score
    return best


def _shift(mask: np.ndarray, u: int, v: int) -> np.ndarray:
    return ndimage.shift(mask.astype(np.uint8), (v, u), order=0, cval=0).astype(bool)


def propagate_masks(clip: VideoClip, anchors: Sequence[Tuple[int, Union[InstanceMask, np.ndarray]]],
                    flows: Optional[Dict] = None, radius: int = DILATION_RADIUS,
                    search: int = FLOW_DEFAULTS["radius"]) -> MaskSeq:
    """
    Every frame takes its mask from the nearest anchor (ties to the earlier
    one), then is dilated by `radius`. Anchor frames keep their masks exactly.

    Without `flows` each anchor instance is tracked on its own: step by step
    it moves by the displacement that best matches its footprint between
    neighbouring frames (see track_displacement). With `flows` the merged
    anchor mask is carried by chaining nearest-neighbour backward warps.
    """
    if not anchors:
        raise InvalidArgument("at least one anchor mask is required")
    num_frames = clip.num_frames
    maps = _anchor_maps(anchors, (clip.height, clip.width))
    order = sorted(maps)
    if order[0] < 0 or order[-1] >= num_frames:
        raise InvalidArgument(f"anchor indices {order} outside [0, {num_frames})")

    nearest = [min(order, key=lambda a: (abs(t - a), a)) for t in range(num_frames)]
    out = np.zeros((num_frames, clip.height, clip.width), dtype=np.uint8)
    for anchor in order:
        out[anchor] = maps[anchor]
        instances = [_pixels_of(m) for i, m in anchors if int(i) == anchor] if flows is None else [maps[anchor]]
        for step in (1, -1):
            tracked = list(instances)
            t = anchor + step
            while 0 <= t < num_frames and nearest[t] == anchor and t not in maps:
                if flows is None:
                    tracked = [
                        _shift(m, *track_displacement(clip.data[t - step], clip.data[t], m, search))
                        for m in tracked
                    ]
                else:
                    key = (t, t - step)
                    if key not in flows:
                        raise InvalidArgument(f"missing flow {key} for mask propagation")
                    tracked = [_warp_nearest(m, flows[key]) for m in tracked]
                out[t] = dilate(np.logical_or.reduce(tracked), radius)
                t += step
    return MaskSeq(out)


class MaskAgent:
    def __init__(self, params: Optional[PairingParams] = None, dilation_radius: int = DILATION_RADIUS,
                 search: int = FLOW_DEFAULTS["radius"]):
        self.params = params or PairingParams()
        self.dilation_radius = dilation_radius
        self.search = search
        self.calls = {"pair": 0, "propagate": 0}
        self.warnings: List[str] = []

    def pair(self, humans: Sequence[InstanceMask], shadows: Sequence[InstanceMask]) -> PairingResult:
        self.calls["pair"] += 1
        result = pair_shadows(humans, shadows, self.params)
        self.warnings.extend(result.warnings)
        logger.info(f"🔍 Paired {len(result.pairs)} shadows, {len(result.unpaired)} left unpaired")
        return result

    def anchor_instances(self, humans: MaskSeq, anchor_indices: Sequence[int],
                         shadows: Optional[MaskSeq] = None) -> List[Tuple[int, InstanceMask]]:
        """
        Removal instances at the anchor frames: every human component merged
        with the shadows paired to it. Unpaired shadows stay in the video.
        """
        anchors = []
        for index in anchor_indices:
            if not 0 <= index < humans.num_frames:
                raise InvalidArgument(f"anchor frame {index} outside [0, {humans.num_frames})")
            people = instances_from_mask(humans.frame(index), index, "human")
            if not people:
                anchors.append((index, InstanceMask(index, np.zeros_like(humans.frame(index)))))
                continue
            if shadows is None:
                anchors += [(index, person) for person in people]
                continue
            result = self.pair(people, instances_from_mask(shadows.frame(index), index, "shadow"))
            for person in people:
                mine = [s for h, s in result.pairs if h is person]
                anchors.append((index, merge_instance(person, None, mine)))
        return anchors

    def propagate(self, clip: VideoClip, anchors, flows: Optional[Dict] = None) -> MaskSeq:
        self.calls["propagate"] += 1
        masks = propagate_masks(clip, anchors, flows, self.dilation_radius, self.search)
        logger.info(f"✅ Propagated {len(anchors)} anchor masks over {clip.num_frames} frames")
        return masks
