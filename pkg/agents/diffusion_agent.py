"""
Noise schedule, v-prediction algebra, DDIM stepping with known-region
reinjection, and the latent / pixel training losses.

Array conventions: latents are (F, c, h, w); known maps are (F, h, w) soft
keep-maps at latent scale and are broadcast over the channel axis.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Protocol, Sequence, Tuple, Union

import numpy as np

from config import LOSS_WEIGHTS, SAMPLER_DEFAULTS
from utils.errors import ContractViolation, DimensionMismatch, InvalidArgument
from utils.latent_codec import LatentClip, decode
from utils.video_io import VideoClip

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, LatentClip]
_SINGULAR = 1e-12


class DenoiserContract(Protocol):
    """Predicts v for a window of latents at training step t"""

    def __call__(
        self,
        z_t: np.ndarray,
        known_map: np.ndarray,
        z_masked: np.ndarray,
        t: int,
        frames: Optional[np.ndarray] = None,
        window: int = 0,
    ) -> np.ndarray:
        ...


@dataclass(frozen=True)
class Schedule:
    train_steps: int
    alpha_bar: np.ndarray  # index 0 is the clean boundary value 1
    inference_steps: int
    inference_indices: Tuple[int, ...]

    def abar(self, t: int) -> float:
        return float(self.alpha_bar[t])

    def step_pair(self, ordinal: int) -> Tuple[int, float, float]:
        """(t, abar_t, abar_prev) for a 1-based ordinal along the trajectory"""
        t = self.inference_indices[ordinal - 1]
        prev_t = self.inference_indices[ordinal] if ordinal < self.inference_steps else 0
        return t, self.abar(t), self.abar(prev_t)


@dataclass(frozen=True)
class LossWeights:
    w1: float = LOSS_WEIGHTS["w1"]
    w2: float = LOSS_WEIGHTS["w2"]
    alpha: float = LOSS_WEIGHTS["alpha"]

    def __post_init__(self):
        if min(self.w1, self.w2, self.alpha) < 0:
            raise InvalidArgument("loss weights must be non-negative")


def make_schedule(
    train_steps: int = SAMPLER_DEFAULTS["train_steps"],
    inference_steps: int = SAMPLER_DEFAULTS["inference_steps"],
    beta_start: float = SAMPLER_DEFAULTS["beta_start"],
    beta_end: float = SAMPLER_DEFAULTS["beta_end"],
) -> Schedule:
    """Scaled-linear betas; inference indices round(k*T/n) for k = n..1"""
    if train_steps < 1 or not 1 <= inference_steps <= train_steps:
        raise InvalidArgument(
            f"need 1 <= inference_steps <= train_steps, got {inference_steps} / {train_steps}"
        )
    betas = np.linspace(beta_start ** 0.5, beta_end ** 0.5, train_steps, dtype=np.float64) ** 2
    alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    indices = tuple(
        int(np.floor(k * train_steps / inference_steps + 0.5)) for k in range(inference_steps, 0, -1)
    )
    return Schedule(train_steps, alpha_bar, inference_steps, indices)


def _arr(x: ArrayLike) -> np.ndarray:
    return x.data if isinstance(x, LatentClip) else np.asarray(x, dtype=np.float64)


def v_from(x0: np.ndarray, eps: np.ndarray, abar: float) -> np.ndarray:
    """v = sqrt(abar) * eps - sqrt(1 - abar) * x0"""
    return np.sqrt(abar) * eps - np.sqrt(1.0 - abar) * x0


def x0_eps_from_v(z_t: np.ndarray, v: np.ndarray, abar: float) -> Tuple[np.ndarray, np.ndarray]:
    a, s = np.sqrt(abar), np.sqrt(1.0 - abar)
    return a * z_t - s * v, s * z_t + a * v


def add_noise(x0: np.ndarray, eps: np.ndarray, abar: float) -> np.ndarray:
    return np.sqrt(abar) * x0 + np.sqrt(1.0 - abar) * eps


def ddim_step(z_t: np.ndarray, v_hat: np.ndarray, abar_t: float, abar_prev: float) -> np.ndarray:
    """Deterministic (eta = 0) DDIM update from a v prediction"""
    x0_hat, eps_hat = x0_eps_from_v(z_t, v_hat, abar_t)
    if abar_prev >= 1.0:
        return x0_hat
    return add_noise(x0_hat, eps_hat, abar_prev)


def eps_for(z_t: np.ndarray, x0_hat: np.ndarray, abar: float) -> np.ndarray:
    """Noise implied by z_t and a clean estimate; 0 at the abar = 1 boundary"""
    if 1.0 - abar < _SINGULAR:
        return np.zeros_like(z_t)
    return (z_t - np.sqrt(abar) * x0_hat) / np.sqrt(1.0 - abar)


def channel_map(known_map: np.ndarray, like: np.ndarray) -> np.ndarray:
    """Broadcast an (F, h, w) keep-map over the channel axis of (F, c, h, w)"""
    known_map = np.asarray(known_map, dtype=np.float64)
    if known_map.ndim == like.ndim - 1:
        known_map = known_map[:, None]
    return np.broadcast_to(known_map, like.shape)


def sampler_step(
    z: np.ndarray,
    ordinal: int,
    known_map: np.ndarray,
    z_masked: np.ndarray,
    denoiser: DenoiserContract,
    sched: Schedule,
    z_known: Optional[np.ndarray] = None,
    noise: Optional[np.ndarray] = None,
    frames: Optional[np.ndarray] = None,
    window: int = 0,
) -> np.ndarray:
    """One denoise + DDIM update (+ reinjection when z_known is given)"""
    t, abar_t, abar_prev = sched.step_pair(ordinal)
    v_hat = np.asarray(denoiser(z, known_map, z_masked, t, frames=frames, window=window))
    if v_hat.shape != z.shape:
        raise ContractViolation(f"denoiser returned {v_hat.shape} for input {z.shape}")
    z_prev = ddim_step(z, v_hat, abar_t, abar_prev)
    if z_known is not None:
        pinned = channel_map(known_map, z_prev) >= 0.5
        z_prev = np.where(pinned, add_noise(z_known, noise, abar_prev), z_prev)
    return z_prev


def sample(
    z_T: ArrayLike,
    known_map: np.ndarray,
    z_masked: ArrayLike,
    denoiser: DenoiserContract,
    sched: Schedule,
    known_reinjection: bool = SAMPLER_DEFAULTS["known_reinjection"],
    z_known: Optional[ArrayLike] = None,
    frames: Optional[np.ndarray] = None,
    window: int = 0,
) -> np.ndarray:
    """
    Run the inference trajectory high -> low and return z_0.

    With reinjection, cells whose known map is >= 0.5 are replaced after each
    step by z_known (default z_masked) forward-noised with the initial noise
    z_T at that step's level.
    """
    z = _arr(z_T).copy()
    zm = _arr(z_masked)
    if zm.shape != z.shape:
        raise DimensionMismatch(f"z_masked {zm.shape} does not match z_T {z.shape}")
    noise = _arr(z_T)
    zk = None
    if known_reinjection:
        zk = zm if z_known is None else _arr(z_known)
    for ordinal in range(1, sched.inference_steps + 1):
        z = sampler_step(z, ordinal, known_map, zm, denoiser, sched, zk, noise, frames, window)
    return z


def latent_loss(v_hat: ArrayLike, v_true: ArrayLike, known_map: np.ndarray,
                weights: LossWeights = LossWeights()) -> float:
    """
    w1 * mean_known(|v_hat - v_true| * m) + w2 * mean_hole(|v_hat - v_true| * (1 - m)),
    each regional mean normalised by its total weight; empty regions add 0.
    """
    diff = np.abs(_arr(v_hat) - _arr(v_true))
    m = channel_map(known_map, diff)
    total = 0.0
    for weight, region in ((weights.w1, m), (weights.w2, 1.0 - m)):
        mass = region.sum()
        if mass > 0:
            total += weight * float((diff * region).sum() / mass)
    return total


def pixel_loss(x: VideoClip, z0: LatentClip) -> float:
    """Mean |x - decode(z0)| over every pixel and channel"""
    decoded = decode(z0, x.fps)
    if decoded.data.shape != x.data.shape:
        raise DimensionMismatch(f"decoded {decoded.data.shape} vs clip {x.data.shape}")
    return float(np.mean(np.abs(x.data - decoded.data)))


def total_loss(lr: float, lpix: float, weights: LossWeights = LossWeights()) -> float:
    return lr + weights.alpha * lpix


def training_objective(stage: int, lr: float, lpix: float,
                       weights: LossWeights = LossWeights()) -> float:
    """Stage 1 trains on the latent loss alone, stage 2 adds the pixel term"""
    if stage == 1:
        return lr
    if stage == 2:
        return total_loss(lr, lpix, weights)
    raise InvalidArgument(f"training stage must be 1 or 2, got {stage}")


def training_target(x0: np.ndarray, eps: np.ndarray, abar: float,
                    prediction_type: str = "v") -> np.ndarray:
    if prediction_type == "epsilon":
        return eps
    if prediction_type == "v":
        return v_from(x0, eps, abar)
    raise InvalidArgument(f"unknown prediction_type {prediction_type!r}")


@dataclass
class DiffusionAgent:
    """Binds a schedule and reinjection policy; counts sampler runs"""
    schedule: Schedule = field(default_factory=make_schedule)
    known_reinjection: bool = SAMPLER_DEFAULTS["known_reinjection"]
    calls: Dict[str, int] = field(default_factory=lambda: {"sample": 0})

    def sample(self, z_T: ArrayLike, known_map: np.ndarray, z_masked: ArrayLike,
               denoiser: DenoiserContract, z_known: Optional[ArrayLike] = None,
               frames: Optional[Sequence[int]] = None, window: int = 0) -> np.ndarray:
        self.calls["sample"] += 1
        logger.info(
            f"🔍 Sampling {self.schedule.inference_steps} DDIM steps "
            f"(t = {list(self.schedule.inference_indices)})"
        )
        frames = None if frames is None else np.asarray(frames)
        return sample(z_T, known_map, z_masked, denoiser, self.schedule,
                      self.known_reinjection, z_known, frames, window)
