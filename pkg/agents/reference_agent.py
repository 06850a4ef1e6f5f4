"""
Reference frame integration: pick a frame, complete it, insert it next to
the clip before encoding and drop its latent again before decoding.
"""
import logging
from dataclasses import dataclass
from typing import Dict, Literal, Tuple, TypeVar, Union

import numpy as np

from agents.flow_agent import FillResult, fill_holes
from utils.errors import DimensionMismatch, InvalidArgument
from utils.latent_codec import LatentClip
from utils.video_io import Frame, MaskSeq, VideoClip, check_pair

logger = logging.getLogger(__name__)

Policy = Union[Literal["min_hole_area"], int]
Sequenced = TypeVar("Sequenced", LatentClip, VideoClip, MaskSeq)


@dataclass(frozen=True)
class RefSpec:
    index: int
    policy: Policy = "min_hole_area"
    insert_position: Literal["prepend", "adjacent"] = "prepend"


def select_reference(holes: MaskSeq, policy: Policy = "min_hole_area") -> int:
    """Frame with the fewest hole pixels (earliest on ties), or an explicit index"""
    if policy == "min_hole_area":
        return int(np.argmin(holes.hole_counts()))
    if isinstance(policy, bool) or not isinstance(policy, (int, np.integer)):
        raise InvalidArgument(f"unknown reference policy {policy!r}")
    if not 0 <= policy < holes.num_frames:
        raise InvalidArgument(f"reference index {policy} outside [0, {holes.num_frames})")
    return int(policy)


def inpaint_reference(frame: Frame, hole: np.ndarray, flow_completed: Frame, residual: np.ndarray) -> FillResult:
    """Harmonically fill whatever flow completion left open in the reference frame"""
    if frame.data.shape != flow_completed.data.shape:
        raise DimensionMismatch(f"frame {frame.data.shape} vs completed {flow_completed.data.shape}")
    if np.asarray(hole).shape != np.asarray(residual).shape:
        raise DimensionMismatch("hole and residual masks disagree")
    return fill_holes(flow_completed, residual)


def insert_reference(clip: VideoClip, holes: MaskSeq, ref: Frame, spec: RefSpec) -> Tuple[VideoClip, MaskSeq, int]:
    """Returns the F+1 clip, its masks (reference slot fully known) and the slot"""
    check_pair(clip, holes)
    if not 0 <= spec.index < clip.num_frames:
        raise InvalidArgument(f"reference index {spec.index} outside [0, {clip.num_frames})")
    slot = 0 if spec.insert_position == "prepend" else spec.index
    known = np.zeros((holes.height, holes.width), dtype=np.uint8)
    return clip.insert_frame(slot, ref), holes.insert_frame(slot, known), slot


def remove_reference(seq: Sequenced, ref_slot: int) -> Sequenced:
    """Drop the reference slot, keeping the order of the remaining frames"""
    if not 0 <= ref_slot < seq.num_frames:
        raise InvalidArgument(f"reference slot {ref_slot} outside [0, {seq.num_frames})")
    return seq.drop_frame(ref_slot)


class ReferenceAgent:
    def __init__(self, policy: Policy = "min_hole_area", insert_position: str = "prepend"):
        self.policy = policy
        self.insert_position = insert_position
        self.calls: Dict[str, int] = {"select": 0, "inpaint": 0, "insert": 0, "remove": 0}
        self.fallback = False

    def prepare(self, clip: VideoClip, holes: MaskSeq, completed: VideoClip,
                residual: MaskSeq) -> Tuple[VideoClip, MaskSeq, int, Frame]:
        """Select, complete and insert; returns clip, masks, slot and the reference frame"""
        self.calls["select"] += 1
        index = select_reference(holes, self.policy)
        self.calls["inpaint"] += 1
        result = inpaint_reference(clip.frame(index), holes.frame(index), completed.frame(index),
                                   residual.frame(index))
        self.fallback = result.fallback
        self.calls["insert"] += 1
        spec = RefSpec(index, self.policy, self.insert_position)
        out_clip, out_holes, slot = insert_reference(clip, holes, result.frame, spec)
        logger.info(f"✅ Reference frame {index} inserted at slot {slot} ({self.insert_position})")
        return out_clip, out_holes, slot, result.frame

    def remove(self, seq: Sequenced, ref_slot: int) -> Sequenced:
        self.calls["remove"] += 1
        return remove_reference(seq, ref_slot)
