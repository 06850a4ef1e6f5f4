import os
import logging
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


# Runtime Configuration
SEED = int(os.getenv("VIP_SEED", "0"))
THREADS = int(os.getenv("VIP_THREADS", "1"))
LOG_LEVEL = os.getenv("VIP_LOG_LEVEL", "INFO")
DEBUG_DIR = os.getenv("VIP_DEBUG_DIR") or None

# Frame directories
FRAME_PATTERN = "frame_%05d.png"
DEFAULT_FPS = 24.0
MASK_THRESHOLD = 128  # on-disk 8-bit value at or above which a pixel is a hole

# Latent codec
LATENT_FACTOR = 8
LATENT_FUNCTIONALS = 4

# Sampler (scaled-linear beta schedule of the SD-1.5 family)
SAMPLER_DEFAULTS = {
    "train_steps": 1000,
    "inference_steps": 8,
    "beta_start": 8.5e-4,
    "beta_end": 1.2e-2,
    "known_reinjection": True,
}

# Loss weights (non-mask, mask, pixel)
LOSS_WEIGHTS = {
    "w1": 1.0,
    "w2": 2.0,
    "alpha": 3.0,
}

# Dual-Fusion defaults
FUSION_DEFAULTS = {
    "window_len": 24,
    "stride": 12,
    "offset": 6,
    "fusion_steps": [1, 7],
    "noise_corr": 0.9,
    "mode": "contiguous",
    "every_n": 2,
}

# Shadow pairing and mask propagation
PAIRING_DEFAULTS = {
    "area_ratio_min": 0.05,
    "area_ratio_max": 3.0,
    "lower_band_fraction": 0.25,
    "touch_margin": 3,
}
DILATION_RADIUS = 2

# Block-matching flow
FLOW_DEFAULTS = {
    "block": 8,
    "radius": 7,
}

# Harmonic pre-fill
FILL_TOLERANCE = 1e-4
FILL_CONSTANT = 0.5

# Composite and metrics
COMPOSITE_FEATHER = 2
PSNR_CAP = 99.0
SSIM_SIGMA = 1.5
SSIM_WINDOW = 11

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def setup_logging(level=None):
    """Configure root logging once for CLI and scripts"""
    logging.basicConfig(
        level=getattr(logging, str(level or LOG_LEVEL).upper(), logging.INFO),
        format=LOG_FORMAT,
    )
