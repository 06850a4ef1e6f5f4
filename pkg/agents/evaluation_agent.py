"""
Quality metrics for inpainted clips and the Report they are collected in.
"""
import math
import logging
from typing import Dict, List, Optional, Union

import numpy as np
from pydantic import BaseModel, field_validator
from skimage.metrics import structural_similarity

from agents.flow_agent import FlowSet, warp
from agents.fusion_agent import SegmentPlan
from config import PSNR_CAP, SSIM_SIGMA, SSIM_WINDOW
from utils.errors import DimensionMismatch, InvalidArgument, PlanViolation
from utils.latent_codec import LatentClip
from utils.video_io import VideoClip, save_image

logger = logging.getLogger(__name__)


class Report(BaseModel):
    psnr: Optional[float] = None
    ssim: Optional[float] = None
    e_warp_x1e3: float = 0.0
    tf: float = 100.0
    seam: float = 0.0
    fusion_ops: int = 0
    runtime_ms: float = 0.0
    per_frame: Optional[Dict[str, List[float]]] = None

    @field_validator("psnr", "ssim", "e_warp_x1e3", "tf", "seam", "runtime_ms")
    @classmethod
    def _finite(cls, value):
        if value is not None and not math.isfinite(value):
            raise ValueError("report values must be finite")
        return value


def _same_shape(a: VideoClip, b: VideoClip):
    if a.data.shape != b.data.shape:
        raise DimensionMismatch(f"clips disagree: {a.data.shape} vs {b.data.shape}")


def _psnr_from_mse(mse: float) -> float:
    if mse <= 0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))


def psnr(a: VideoClip, b: VideoClip) -> float:
    """10 log10(1 / MSE) over every pixel, capped for identical clips"""
    _same_shape(a, b)
    return _psnr_from_mse(float(np.mean((a.data - b.data) ** 2)))


def psnr_per_frame(a: VideoClip, b: VideoClip) -> List[float]:
    _same_shape(a, b)
    mse = ((a.data - b.data) ** 2).reshape(a.num_frames, -1).mean(axis=1)
    return [_psnr_from_mse(float(m)) for m in mse]


def ssim(a: VideoClip, b: VideoClip) -> float:
    """Gaussian-window SSIM (11 x 11, sigma 1.5) averaged per frame, then over the clip"""
    _same_shape(a, b)
    if a.height < SSIM_WINDOW or a.width < SSIM_WINDOW:
        raise InvalidArgument(f"frames must be at least {SSIM_WINDOW}x{SSIM_WINDOW} for SSIM")
    scores = []
    for fa, fb in zip(a.data, b.data):
        if a.channels == 1:
            fa, fb, axis = fa[:, :, 0], fb[:, :, 0], None
        else:
            axis = 2
        scores.append(structural_similarity(
            fa, fb, data_range=1.0, gaussian_weights=True, sigma=SSIM_SIGMA,
            use_sample_covariance=False, channel_axis=axis,
        ))
    return float(np.mean(scores))


def warping_error(clip: VideoClip, flows: FlowSet, warnings: Optional[List[str]] = None) -> float:
    """
    Mean squared difference between frame t+1 and frame t warped into it,
    over covered pixels, averaged over pairs and reported x 1e3.
    """
    if clip.num_frames < 2:
        return 0.0
    errors = []
    for t in range(clip.num_frames - 1):
        key = (t + 1, t)
        if key not in flows:
            raise InvalidArgument(f"missing flow {key}")
        warped, coverage = warp(clip.data[t], flows[key])
        covered = coverage.astype(bool)
        if not covered.any():
            message = f"no warp coverage between frames {t} and {t + 1}"
            logger.warning(f"⚠️ {message}")
            if warnings is not None:
                warnings.append(message)
            errors.append(0.0)
            continue
        diff = clip.data[t + 1][covered] - warped.data[covered]
        errors.append(float(np.mean(diff ** 2)))
    return float(np.mean(errors)) * 1e3


def temporal_flicker(clip: VideoClip, static_mask: Optional[np.ndarray] = None) -> float:
    """100 * (1 - mean adjacent-frame MAE), optionally restricted to static_mask pixels"""
    if clip.num_frames < 2:
        raise InvalidArgument("temporal flicker needs at least two frames")
    diffs = np.abs(np.diff(clip.data, axis=0))
    if static_mask is not None:
        keep = np.asarray(static_mask).astype(bool)
        if keep.shape != (clip.height, clip.width):
            raise DimensionMismatch(f"static mask {keep.shape} does not match frames")
        if not keep.any():
            return 100.0
        diffs = diffs[:, keep]
    return 100.0 * (1.0 - float(diffs.mean()))


def seam_score(values: Union[LatentClip, VideoClip, np.ndarray], plan: SegmentPlan) -> float:
    """Mean frame-to-frame |change| at window boundaries minus the same over other frames, floored at 0"""
    data = values.data if isinstance(values, (LatentClip, VideoClip)) else np.asarray(values, dtype=np.float64)
    if data.shape[0] != plan.num_frames:
        raise PlanViolation(f"plan covers {plan.num_frames} frames, values have {data.shape[0]}")
    if not plan.boundaries:
        return 0.0
    jumps = np.abs(np.diff(data, axis=0)).reshape(data.shape[0] - 1, -1).mean(axis=1)
    boundary = np.zeros(data.shape[0], dtype=bool)
    boundary[list(plan.boundaries)] = True
    at_boundary = jumps[boundary[1:]].mean()
    inner = jumps[~boundary[1:]]
    baseline = inner.mean() if inner.size else 0.0
    return max(0.0, float(at_boundary - baseline))


def yt_slice(clip: VideoClip, column: int, file_path: Optional[str] = None) -> np.ndarray:
    """Stack column `column` of every frame: row t of the (F, H, C) image is frame t"""
    if not 0 <= column < clip.width:
        raise InvalidArgument(f"column {column} outside [0, {clip.width})")
    image = clip.data[:, :, column, :]
    if file_path:
        save_image(image, file_path)
        logger.info(f"✅ Saved Y-T slice of column {column} to {file_path}")
    return image


class EvaluationAgent:
    def __init__(self):
        self.warnings: List[str] = []

    def evaluate(self, output: VideoClip, flows: FlowSet, plate: Optional[VideoClip] = None,
                 plan: Optional[SegmentPlan] = None, latent=None, fusion_ops: int = 0,
                 runtime_ms: float = 0.0, static_mask: Optional[np.ndarray] = None) -> Report:
        report = Report(
            e_warp_x1e3=warping_error(output, flows, self.warnings),
            tf=temporal_flicker(output, static_mask) if output.num_frames > 1 else 100.0,
            seam=seam_score(latent, plan) if plan is not None and latent is not None else 0.0,
            fusion_ops=fusion_ops,
            runtime_ms=runtime_ms,
        )
        if plate is not None:
            report.psnr = psnr(output, plate)
            report.ssim = ssim(output, plate) if min(output.height, output.width) >= SSIM_WINDOW else None
            report.per_frame = {"psnr": psnr_per_frame(output, plate)}
        logger.info(f"🔍 PSNR {report.psnr}, SSIM {report.ssim}, E_warp {report.e_warp_x1e3:.4f}, "
                    f"TF {report.tf:.3f}, seam {report.seam:.5f}")
        return report
