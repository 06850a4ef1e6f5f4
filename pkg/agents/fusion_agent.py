"""
Dual-stream segment refinement for long clips.

The clip is cut into overlapping windows from two streams (stream B is stream
A shifted by `offset`). Every window follows its own DDIM trajectory; at the
configured step ordinals the windows' latents are blended with normalised
ramp weights and scattered back. The final clip takes every frame from the
window that owns it (largest ramp weight).
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from agents.diffusion_agent import DenoiserContract, Schedule, make_schedule, sampler_step
from config import FUSION_DEFAULTS, LATENT_FUNCTIONALS, SAMPLER_DEFAULTS
from utils.errors import InvalidArgument, PlanViolation
from utils.latent_codec import LatentClip

logger = logging.getLogger(__name__)


class FusionConfig(BaseModel):
    window_len: int = Field(FUSION_DEFAULTS["window_len"], ge=1)
    stride: int = Field(FUSION_DEFAULTS["stride"], ge=1)
    offset: int = Field(FUSION_DEFAULTS["offset"], ge=0)
    fusion_steps: List[int] = Field(default_factory=lambda: list(FUSION_DEFAULTS["fusion_steps"]))
    noise_corr: float = Field(FUSION_DEFAULTS["noise_corr"], ge=0.0, le=1.0)
    mode: Literal["contiguous", "strided"] = FUSION_DEFAULTS["mode"]
    every_n: int = Field(FUSION_DEFAULTS["every_n"], ge=1)

    @field_validator("fusion_steps")
    @classmethod
    def _ordinals(cls, steps: List[int]) -> List[int]:
        if any(s < 1 for s in steps):
            raise ValueError("fusion step ordinals are 1-based")
        return sorted(set(steps))

    @model_validator(mode="after")
    def _window_geometry(self) -> "FusionConfig":
        if self.stride > self.window_len:
            raise ValueError(f"stride {self.stride} exceeds window_len {self.window_len}")
        if self.offset >= self.stride:
            raise ValueError(f"offset {self.offset} must be smaller than stride {self.stride}")
        return self


@dataclass(frozen=True)
class SegmentPlan:
    """Windows over [0, F) with per-(frame, window) blend weights"""
    num_frames: int
    windows: List[np.ndarray]  # global frame indices per window, ascending
    stream_of: List[str]  # "A" or "B" per window
    raw_weights: np.ndarray  # (F, W) ramp values, 0 where a window does not cover
    weights: np.ndarray  # (F, W) raw weights normalised per frame
    owner: np.ndarray  # (F,) window id each frame is assembled from
    boundaries: Tuple[int, ...]  # frames whose owner differs from the previous frame

    @property
    def streams(self) -> Tuple[List[np.ndarray], List[np.ndarray]]:
        a = [w for w, s in zip(self.windows, self.stream_of) if s == "A"]
        b = [w for w, s in zip(self.windows, self.stream_of) if s == "B"]
        return a, b

    def ranges(self) -> List[Tuple[int, int]]:
        """(first, last + 1) of every window; exact ranges in contiguous mode"""
        return [(int(w[0]), int(w[-1]) + 1) for w in self.windows]

    def covering(self, frame: int) -> List[int]:
        return [int(i) for i in np.nonzero(self.raw_weights[frame])[0]]

    def position(self, window: int, frame: int) -> int:
        return int(np.searchsorted(self.windows[window], frame))


def _stream_starts(length: int, cfg: FusionConfig) -> Tuple[List[int], List[int]]:
    """Start positions of stream A and stream B windows over `length` frames"""
    if length <= cfg.window_len:
        return [0], []
    starts_a = list(range(0, length - cfg.window_len, cfg.stride)) + [length - cfg.window_len]
    # shifted windows that would run past the end are dropped, not clipped
    starts_b = [s + cfg.offset for s in starts_a if s + cfg.offset + cfg.window_len <= length]
    return starts_a, starts_b


def _ramp(n: int) -> np.ndarray:
    """1 at the centre, 1/n at both edges"""
    if n == 1:
        return np.ones(1)
    centre = (n - 1) / 2.0
    return 1.0 - (1.0 - 1.0 / n) * np.abs(np.arange(n) - centre) / centre


def plan_segments(num_frames: int, cfg: Optional[FusionConfig] = None) -> SegmentPlan:
    cfg = cfg or FusionConfig()
    if num_frames < 1:
        raise InvalidArgument(f"need at least one frame, got {num_frames}")

    if cfg.mode == "strided":
        groups = [np.arange(r, num_frames, cfg.every_n) for r in range(min(cfg.every_n, num_frames))]
    else:
        groups = [np.arange(num_frames)]

    entries = []
    for group in groups:
        starts_a, starts_b = _stream_starts(len(group), cfg)
        length = min(cfg.window_len, len(group))
        for stream, starts in (("A", starts_a), ("B", starts_b)):
            for s in starts:
                entries.append((int(group[s]), stream, group[s:s + length]))
    entries.sort(key=lambda e: (e[0], e[1]))

    windows = [e[2] for e in entries]
    raw = np.zeros((num_frames, len(windows)))
    for w, frames in enumerate(windows):
        raw[frames, w] = _ramp(len(frames))
    totals = raw.sum(axis=1, keepdims=True)
    if np.any(totals == 0):
        raise PlanViolation("plan leaves frames uncovered")
    owner = np.argmax(raw, axis=1)  # first maximum, i.e. the earlier window on ties
    boundaries = tuple(int(f) for f in range(1, num_frames) if owner[f] != owner[f - 1])
    return SegmentPlan(
        num_frames=num_frames,
        windows=windows,
        stream_of=[e[1] for e in entries],
        raw_weights=raw,
        weights=raw / totals,
        owner=owner,
        boundaries=boundaries,
    )


def init_correlated_noise(num_frames: int, shape: Sequence[int], rho: float, seed: int) -> LatentClip:
    """eps_0 ~ N(0, I); eps_f = rho * eps_{f-1} + sqrt(1 - rho^2) * xi_f"""
    if not 0.0 <= rho <= 1.0:
        raise InvalidArgument(f"noise correlation must lie in [0, 1], got {rho}")
    if num_frames < 1:
        raise InvalidArgument(f"need at least one frame, got {num_frames}")
    shape = tuple(int(s) for s in shape)
    rng = np.random.default_rng(seed)
    noise = np.empty((num_frames,) + shape)
    noise[0] = rng.standard_normal(shape)
    fresh = np.sqrt(1.0 - rho * rho)
    for f in range(1, num_frames):
        noise[f] = rho * noise[f - 1] + fresh * rng.standard_normal(shape)
    return LatentClip(noise, max(1, shape[0] // LATENT_FUNCTIONALS))


def _data(x: Union[np.ndarray, LatentClip]) -> np.ndarray:
    return x.data if isinstance(x, LatentClip) else np.asarray(x, dtype=np.float64)


def blend_windows(window_latents: Sequence[Union[np.ndarray, LatentClip]], plan: SegmentPlan):
    """Per-frame weighted sum of the covering windows, summed in window order"""
    if len(window_latents) != len(plan.windows):
        raise PlanViolation(f"{len(window_latents)} window latents for {len(plan.windows)} windows")
    arrays = [_data(x) for x in window_latents]
    for w, (frames, values) in enumerate(zip(plan.windows, arrays)):
        if values.shape[0] != len(frames):
            raise PlanViolation(f"window {w} holds {values.shape[0]} frames, plan expects {len(frames)}")
    coverage = (plan.raw_weights > 0).sum(axis=1)
    if np.any(coverage == 0):
        raise PlanViolation(f"frames {np.nonzero(coverage == 0)[0].tolist()} are not covered")

    out = np.zeros((plan.num_frames,) + arrays[0].shape[1:])
    expand = (slice(None),) + (None,) * (arrays[0].ndim - 1)
    for w, (frames, values) in enumerate(zip(plan.windows, arrays)):
        out[frames] += plan.weights[frames, w][expand] * values
    # single-window frames are copied, not multiplied
    single = np.nonzero(coverage == 1)[0]
    for f in single:
        w = int(plan.owner[f])
        out[f] = arrays[w][plan.position(w, f)]
    if isinstance(window_latents[0], LatentClip):
        return window_latents[0].with_data(out)
    return out


@dataclass
class FusionResult:
    latent: np.ndarray
    plan: SegmentPlan
    fusion_passes: int


def run_dual_fusion(
    z_T: Union[np.ndarray, LatentClip],
    known_map: np.ndarray,
    z_masked: Union[np.ndarray, LatentClip],
    denoiser: DenoiserContract,
    sched: Schedule,
    cfg: Optional[FusionConfig] = None,
    plan: Optional[SegmentPlan] = None,
    z_known: Optional[Union[np.ndarray, LatentClip]] = None,
    known_reinjection: bool = SAMPLER_DEFAULTS["known_reinjection"],
    threads: int = 1,
) -> FusionResult:
    """
    Denoise every window along the inference trajectory, blending the
    windows after the DDIM update of each ordinal in cfg.fusion_steps.
    """
    cfg = cfg or FusionConfig()
    noise = _data(z_T)
    zm = _data(z_masked)
    km = np.asarray(known_map, dtype=np.float64)
    zk = (zm if z_known is None else _data(z_known)) if known_reinjection else None
    plan = plan or plan_segments(noise.shape[0], cfg)
    if plan.num_frames != noise.shape[0]:
        raise PlanViolation(f"plan covers {plan.num_frames} frames, latent has {noise.shape[0]}")
    if any(s > sched.inference_steps for s in cfg.fusion_steps):
        raise InvalidArgument(
            f"fusion steps {cfg.fusion_steps} exceed {sched.inference_steps} inference steps"
        )

    states = [noise[frames].copy() for frames in plan.windows]

    def step_window(w: int, ordinal: int) -> np.ndarray:
        frames = plan.windows[w]
        return sampler_step(
            states[w], ordinal, km[frames], zm[frames], denoiser, sched,
            z_known=None if zk is None else zk[frames],
            noise=noise[frames], frames=frames, window=w,
        )

    passes = 0
    fuse_at = set(cfg.fusion_steps)
    with ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
        for ordinal in range(1, sched.inference_steps + 1):
            states = list(executor.map(lambda w: step_window(w, ordinal), range(len(states))))
            if ordinal in fuse_at and len(states) > 1:
                blended = blend_windows(states, plan)
                states = [blended[frames].copy() for frames in plan.windows]
                passes += 1

    out = np.empty_like(noise)
    for f in range(plan.num_frames):
        w = int(plan.owner[f])
        out[f] = states[w][plan.position(w, f)]
    return FusionResult(out, plan, passes)


def count_fusion_ops(cfg: Optional[FusionConfig] = None, baseline: bool = False,
                     inference_steps: int = SAMPLER_DEFAULTS["inference_steps"]) -> int:
    """Fusion passes per trajectory: |fusion_steps|, or every step for the baseline"""
    if baseline:
        return inference_steps
    cfg = cfg or FusionConfig()
    return len([s for s in cfg.fusion_steps if s <= inference_steps])


class FusionAgent:
    def __init__(self, cfg: Optional[FusionConfig] = None, schedule: Optional[Schedule] = None,
                 known_reinjection: bool = SAMPLER_DEFAULTS["known_reinjection"], threads: int = 1):
        self.cfg = cfg or FusionConfig()
        self.schedule = schedule or make_schedule()
        self.known_reinjection = known_reinjection
        self.threads = threads
        self.calls: Dict[str, int] = {"plan": 0, "noise": 0, "fusion": 0}

    def plan(self, num_frames: int) -> SegmentPlan:
        self.calls["plan"] += 1
        plan = plan_segments(num_frames, self.cfg)
        a, b = plan.streams
        logger.info(
            f"🔍 Planned {len(a)} + {len(b)} windows over {num_frames} frames, "
            f"boundaries at {list(plan.boundaries)}"
        )
        return plan

    def noise(self, num_frames: int, shape: Sequence[int], seed: int) -> LatentClip:
        self.calls["noise"] += 1
        return init_correlated_noise(num_frames, shape, self.cfg.noise_corr, seed)

    def run(self, z_T, known_map, z_masked, denoiser: DenoiserContract,
            plan: Optional[SegmentPlan] = None, z_known=None) -> FusionResult:
        self.calls["fusion"] += 1
        result = run_dual_fusion(
            z_T, known_map, z_masked, denoiser, self.schedule, self.cfg,
            plan=plan, z_known=z_known, known_reinjection=self.known_reinjection,
            threads=self.threads,
        )
        logger.info(
            f"✅ Dual fusion finished: {result.fusion_passes} fusion passes "
            f"(baseline {count_fusion_ops(self.cfg, True, self.schedule.inference_steps)})"
        )
        return result
