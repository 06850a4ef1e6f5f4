"""
End-to-end object removal run: masks, flow completion, pre-fill, reference
frame, latent sampling with dual fusion, decode, composite and evaluation.
"""
import os
import json
import time
import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
from scipy import ndimage

from agents.diffusion_agent import DiffusionAgent, make_schedule
from agents.evaluation_agent import EvaluationAgent, Report
from agents.flow_agent import FlowCompletionAgent, estimate_clip_flows, save_flow
from agents.fusion_agent import FusionAgent, FusionResult
from agents.mask_agent import MaskAgent
from agents.reference_agent import ReferenceAgent
from config import LATENT_FACTOR
from utils.denoiser_helper import DenoiserHelper
from utils.errors import InvalidArgument, StageError
from utils.latent_codec import LatentClip, decode, encode
from utils.settings import PipelineConfig, config_to_toml
from utils.video_io import (
    MaskSeq,
    VideoClip,
    apply_mask,
    check_pair,
    downscale_mask,
    load_frame_dir,
    save_frame_dir,
    save_image,
)

logger = logging.getLogger(__name__)


@dataclass
class InpaintResult:
    output: VideoClip
    report: Report
    counters: Dict[str, Dict[str, int]] = field(default_factory=dict)
    intermediates: Dict[str, Any] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)

    def __iter__(self):
        return iter((self.output, self.report))


@contextmanager
def _stage(name: str):
    try:
        yield
    except StageError:
        raise
    except Exception as e:
        logger.error(f"❌ Stage {name} failed: {e}")
        raise StageError(name, e) from e


class DebugSink:
    """Writes intermediates under the debug directory as soon as they exist"""

    def __init__(self, root: Optional[str]):
        self.root = root
        if root:
            os.makedirs(root, exist_ok=True)

    def dump(self, name: str, item: Any):
        if not self.root or item is None:
            return
        target = os.path.join(self.root, name)
        if isinstance(item, (VideoClip, MaskSeq)):
            save_frame_dir(item, target)
        elif isinstance(item, np.ndarray):
            save_image(item, target + ".png")
        elif isinstance(item, dict) and item and all(isinstance(k, tuple) for k in item):
            os.makedirs(target, exist_ok=True)
            for (i, j), flow in sorted(item.items()):
                save_flow(flow, os.path.join(target, f"flow_{i:05d}_{j:05d}.flo"))
        elif isinstance(item, str):
            with open(target, "w", encoding="utf-8") as handle:
                handle.write(item)
        else:
            with open(target + ".json", "w", encoding="utf-8") as handle:
                json.dump(item, handle, indent=2)


def composite(original: VideoClip, generated: VideoClip, holes: MaskSeq, feather: int) -> VideoClip:
    """
    (1 - a) * original + a * generated with a = 1 inside the hole and
    1 - d / (feather + 1) at distance d <= feather outside it, 0 beyond.
    """
    check_pair(original, holes)
    alpha = np.zeros(holes.data.shape)
    for t in range(holes.num_frames):
        hole = holes.data[t].astype(bool)
        if not hole.any():
            continue
        distance = ndimage.distance_transform_edt(~hole)
        alpha[t] = np.where(distance <= feather, 1.0 - distance / (feather + 1.0), 0.0)
    alpha = alpha[..., None]
    return original.with_data((1.0 - alpha) * original.data + alpha * generated.data)


def _load_inputs(cfg: PipelineConfig, clip, holes, plate, sprite_masks, shadow_masks):
    io = cfg.io
    if clip is None:
        if not io.path("frames"):
            raise InvalidArgument("no input frames given")
        clip = load_frame_dir(io.path("frames"), "clip", cfg.fps)

    def optional(name: str, kind: str):
        path = io.path(name)
        return load_frame_dir(path, kind, cfg.fps) if path and os.path.isdir(path) else None

    holes = holes if holes is not None else optional("masks", "mask")
    plate = plate if plate is not None else optional("plate", "clip")
    if cfg.masks.pair_shadows:
        sprite_masks = sprite_masks if sprite_masks is not None else optional("sprite_masks", "mask")
        shadow_masks = shadow_masks if shadow_masks is not None else optional("shadow_masks", "mask")
    return clip, holes, plate, sprite_masks, shadow_masks


def run_inpaint(
    cfg: Optional[PipelineConfig] = None,
    clip: Optional[VideoClip] = None,
    holes: Optional[MaskSeq] = None,
    plate: Optional[VideoClip] = None,
    sprite_masks: Optional[MaskSeq] = None,
    shadow_masks: Optional[MaskSeq] = None,
) -> InpaintResult:
    """Run the whole removal pipeline; the result unpacks as (output, report)"""
    cfg = cfg or PipelineConfig()
    sink = DebugSink(cfg.debug_dir)
    sink.dump("config.toml", config_to_toml(cfg))
    started = time.perf_counter()

    with _stage("io"):
        clip, holes, plate, sprite_masks, shadow_masks = _load_inputs(
            cfg, clip, holes, plate, sprite_masks, shadow_masks
        )

    mask_agent = MaskAgent(cfg.pairing, cfg.masks.dilation_radius, cfg.flow.radius)
    flow_agent = FlowCompletionAgent(cfg.flow.block, cfg.flow.radius, cfg.flow.max_chain, cfg.threads)
    ref_agent = ReferenceAgent(cfg.ref.policy, cfg.ref.position)
    schedule = make_schedule(cfg.sampler.train_steps, cfg.sampler.inference_steps,
                             cfg.sampler.beta_start, cfg.sampler.beta_end)
    fusion_agent = FusionAgent(cfg.fusion, schedule, cfg.sampler.known_reinjection, cfg.threads)
    diffusion_agent = DiffusionAgent(schedule, cfg.sampler.known_reinjection)
    intermediates: Dict[str, Any] = {}

    with _stage("masks"):
        if cfg.masks.anchors:
            source = sprite_masks if cfg.masks.pair_shadows else holes
            if source is None:
                raise InvalidArgument("anchor propagation needs anchor-quality masks")
            anchors = mask_agent.anchor_instances(
                source, cfg.masks.anchors, shadow_masks if cfg.masks.pair_shadows else None
            )
            holes = mask_agent.propagate(clip, anchors)
        elif holes is None:
            raise InvalidArgument("either masks or anchor frames are required")
        check_pair(clip, holes)
        intermediates["masks"] = holes
        sink.dump("masks", holes)

    completed, residual = clip, holes
    if cfg.stages.op_completion:
        with _stage("flow_completion"):
            flows = flow_agent.estimate(clip, holes)
            completed, residual = flow_agent.propagate(clip, holes, flows)
            intermediates.update(flow_completed=completed, residual=residual)
            sink.dump("flows", flows)
            sink.dump("flow_completed", completed)
            sink.dump("residual", residual)

    with _stage("prefill"):
        prefilled, fallback = flow_agent.fill(completed, residual)
        intermediates["prefilled"] = prefilled
        sink.dump("prefilled", prefilled)

    work_clip, work_holes, work_prefilled, work_plate, slot = clip, holes, prefilled, plate, None
    if cfg.stages.ref_frame:
        with _stage("reference"):
            work_clip, work_holes, slot, ref = ref_agent.prepare(clip, holes, completed, residual)
            work_prefilled = prefilled.insert_frame(slot, ref)
            if plate is not None:
                work_plate = plate.insert_frame(slot, ref)
            intermediates.update(reference=ref, ref_slot=slot)
            sink.dump("reference", ref.data)

    with _stage("encode"):
        z_known = encode(work_prefilled)
        z_masked = encode(apply_mask(work_clip, work_holes))
        known_map = downscale_mask(work_holes, LATENT_FACTOR)

    with _stage("sampling"):
        num_frames = z_known.num_frames
        z_T = fusion_agent.noise(num_frames, z_known.data.shape[1:], cfg.seed)
        plan = fusion_agent.plan(num_frames)
        helper = DenoiserHelper(schedule)
        target = encode(work_plate) if cfg.denoiser.kind == "oracle" and work_plate is not None else None
        denoiser = helper.create(
            cfg.denoiser.kind, target=target, prior=z_known,
            amplitude=cfg.denoiser.amplitude, inertia=cfg.denoiser.inertia,
        )
        if len(plan.windows) == 1:
            # one window covers the clip: nothing to fuse
            latent = diffusion_agent.sample(z_T, known_map, z_masked, denoiser, z_known=z_known,
                                            frames=plan.windows[0])
            fused = FusionResult(latent, plan, 0)
        else:
            fused = fusion_agent.run(z_T, known_map, z_masked, denoiser, plan, z_known=z_known)
        intermediates["plan"] = plan

    with _stage("decode"):
        latent = z_known.with_data(fused.latent)
        if slot is not None:
            latent = ref_agent.remove(latent, slot)
        generated = decode(latent, clip.fps)
        output = composite(clip, generated, holes, cfg.composite_feather)
        runtime_ms = (time.perf_counter() - started) * 1e3
        intermediates["generated"] = generated
        sink.dump("generated", generated)
        sink.dump("output", output)

    with _stage("metrics"):
        evaluator = EvaluationAgent()
        eval_flows = estimate_clip_flows(output, None, cfg.flow.block, cfg.flow.radius, cfg.threads)
        report = evaluator.evaluate(
            output, eval_flows, plate=plate, plan=plan, latent=fused.latent,
            fusion_ops=fused.fusion_passes, runtime_ms=runtime_ms,
        )

    counters = {
        "masks": dict(mask_agent.calls),
        "flow": dict(flow_agent.calls),
        "reference": dict(ref_agent.calls),
        "fusion": dict(fusion_agent.calls),
        "diffusion": dict(diffusion_agent.calls),
    }
    warnings = mask_agent.warnings + evaluator.warnings
    if fallback:
        warnings.append(f"constant fill fallback for frames {fallback}")
    sink.dump("counters", counters)
    logger.info(f"✅ Inpainting finished in {runtime_ms:.0f} ms")
    return InpaintResult(output, report, counters, intermediates, warnings)
