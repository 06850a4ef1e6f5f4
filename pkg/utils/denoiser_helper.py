"""
Toy denoisers implementing the DenoiserContract in place of the trained U-Net.

All of them predict a clean estimate x0_hat and return the v that makes
x0_eps_from_v(z_t, v, abar) give back exactly that estimate.
"""
import logging
from typing import Dict, Optional, Union

import numpy as np

from agents.diffusion_agent import Schedule, channel_map, eps_for, make_schedule, v_from, x0_eps_from_v
from utils.errors import ContractViolation, InvalidArgument
from utils.latent_codec import LatentClip

logger = logging.getLogger(__name__)

_FULLY_KNOWN = 1.0 - 1e-9


def _array(x: Union[np.ndarray, LatentClip]) -> np.ndarray:
    return x.data if isinstance(x, LatentClip) else np.asarray(x, dtype=np.float64)


class _LatentDenoiser:
    def __init__(self, reference: Union[np.ndarray, LatentClip], schedule: Optional[Schedule] = None):
        self.reference = _array(reference)
        self.schedule = schedule or make_schedule()

    def _window(self, source: np.ndarray, frames: Optional[np.ndarray], z_t: np.ndarray) -> np.ndarray:
        sliced = source if frames is None else source[np.asarray(frames)]
        if sliced.shape != z_t.shape:
            raise ContractViolation(f"denoiser state {sliced.shape} does not match z_t {z_t.shape}")
        return sliced

    def predict_x0(self, z_t, known_map, z_masked, t, frames, window) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, z_t, known_map, z_masked, t, frames=None, window=0) -> np.ndarray:
        z_t = np.asarray(z_t, dtype=np.float64)
        abar = self.schedule.abar(t)
        x0_hat = self.predict_x0(z_t, known_map, np.asarray(z_masked), t, frames, window)
        return v_from(x0_hat, eps_for(z_t, x0_hat, abar), abar)


class OracleDenoiser(_LatentDenoiser):
    """Returns the exact v for a known target, so DDIM lands on the target"""

    def predict_x0(self, z_t, known_map, z_masked, t, frames, window):
        return self._window(self.reference, frames, z_t)


class PriorDenoiser(_LatentDenoiser):
    """Fully known cells follow z_masked, every other cell follows the prior"""

    def predict_x0(self, z_t, known_map, z_masked, t, frames, window):
        prior = self._window(self.reference, frames, z_t)
        fully_known = channel_map(known_map, z_t) >= _FULLY_KNOWN
        return np.where(fully_known, z_masked, prior)


class SeamProbeDenoiser(PriorDenoiser):
    """
    Prior denoiser with a window-parity offset of +/- amplitude in the hole.

    Each window remembers the noise estimate it returned last, so the next
    call can read back the offset z_t already carries. A fraction `inertia`
    of that offset (bounded by the amplitude) is kept, which lets a fusion
    pass that averaged the windows carry into the following steps. Without
    fusion the read-back offset is the window's own, so the hole sits at
    exactly +/- amplitude. The first inference step starts from the window's
    own offset.
    """

    def __init__(self, prior, amplitude: float, inertia: float = 0.5,
                 schedule: Optional[Schedule] = None):
        super().__init__(prior, schedule)
        if amplitude < 0 or not 0.0 <= inertia < 1.0:
            raise InvalidArgument("need amplitude >= 0 and 0 <= inertia < 1")
        self.amplitude = amplitude
        self.inertia = inertia
        self._last_eps: Dict[int, np.ndarray] = {}

    def predict_x0(self, z_t, known_map, z_masked, t, frames, window):
        base = super().predict_x0(z_t, known_map, z_masked, t, frames, window)
        hole = 1.0 - channel_map(known_map, z_t)
        own = (1.0 if window % 2 == 0 else -1.0) * self.amplitude
        committed = np.full_like(z_t, own)
        last = self._last_eps.get(window)
        if t != self.schedule.inference_indices[0] and last is not None and last.shape == z_t.shape:
            abar = self.schedule.abar(t)
            current = (z_t - np.sqrt(1.0 - abar) * last) / np.sqrt(abar)
            committed = np.clip(current - base, -self.amplitude, self.amplitude)
        offset = (1.0 - self.inertia) * own + self.inertia * committed
        return base + offset * hole

    def __call__(self, z_t, known_map, z_masked, t, frames=None, window=0) -> np.ndarray:
        v = super().__call__(z_t, known_map, z_masked, t, frames, window)
        self._last_eps[window] = x0_eps_from_v(np.asarray(z_t, dtype=np.float64), v, self.schedule.abar(t))[1]
        return v


def oracle_denoiser(target, schedule: Optional[Schedule] = None) -> OracleDenoiser:
    return OracleDenoiser(target, schedule)


def prior_denoiser(prior, schedule: Optional[Schedule] = None) -> PriorDenoiser:
    return PriorDenoiser(prior, schedule)


def seam_probe_denoiser(prior, amplitude: float, inertia: float = 0.5,
                        schedule: Optional[Schedule] = None) -> SeamProbeDenoiser:
    return SeamProbeDenoiser(prior, amplitude, inertia, schedule)


class DenoiserHelper:
    def __init__(self, schedule: Optional[Schedule] = None):
        self.schedule = schedule or make_schedule()

    def create(self, kind: str, target=None, prior=None, amplitude: float = 0.1,
               inertia: float = 0.5):
        """Build the configured denoiser"""
        if kind == "oracle":
            if target is None:
                raise InvalidArgument("oracle denoiser needs a ground-truth target latent")
            return oracle_denoiser(target, self.schedule)
        if kind == "prior":
            return prior_denoiser(prior, self.schedule)
        if kind == "seam_probe":
            return seam_probe_denoiser(prior, amplitude, inertia, self.schedule)
        raise InvalidArgument(f"unknown denoiser kind {kind!r}")
