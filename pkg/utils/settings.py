"""
Pipeline configuration: pydantic sections plus a loader for flat dotted-key
files such as

    seed = 3
    fusion.window_len = 24
    fusion.fusion_steps = [1, 7]
    stages.op_completion = false
    ref.enabled = true

Values are layered defaults < file < environment (VIP_*) < explicit overrides.
"""
import os
import logging
from typing import Any, Dict, List, Literal, Optional, Union

import toml
from pydantic import BaseModel, Field, ValidationError, model_validator

from agents.fusion_agent import FusionConfig
from agents.mask_agent import PairingParams
from config import (
    COMPOSITE_FEATHER,
    DEBUG_DIR,
    DEFAULT_FPS,
    DILATION_RADIUS,
    FLOW_DEFAULTS,
    SAMPLER_DEFAULTS,
    SEED,
    THREADS,
)
from utils.errors import InvalidArgument, IoError

logger = logging.getLogger(__name__)

_ENV_KEYS = {"VIP_SEED": "seed", "VIP_THREADS": "threads", "VIP_DEBUG_DIR": "debug_dir"}


class StageToggles(BaseModel):
    op_completion: bool = True
    ref_frame: bool = True


class SamplerConfig(BaseModel):
    train_steps: int = Field(SAMPLER_DEFAULTS["train_steps"], ge=1)
    inference_steps: int = Field(SAMPLER_DEFAULTS["inference_steps"], ge=1)
    beta_start: float = Field(SAMPLER_DEFAULTS["beta_start"], gt=0)
    beta_end: float = Field(SAMPLER_DEFAULTS["beta_end"], gt=0)
    known_reinjection: bool = SAMPLER_DEFAULTS["known_reinjection"]

    @model_validator(mode="after")
    def _steps(self) -> "SamplerConfig":
        if self.inference_steps > self.train_steps:
            raise ValueError("inference_steps cannot exceed train_steps")
        return self


class DenoiserConfig(BaseModel):
    kind: Literal["oracle", "prior", "seam_probe"] = "prior"
    amplitude: float = Field(0.1, ge=0)
    inertia: float = Field(0.5, ge=0, lt=1)


class FlowConfig(BaseModel):
    block: int = Field(FLOW_DEFAULTS["block"], ge=1)
    radius: int = Field(FLOW_DEFAULTS["radius"], ge=0)
    max_chain: Optional[int] = Field(None, ge=0)


class MaskConfig(BaseModel):
    anchors: Optional[List[int]] = None
    dilation_radius: int = Field(DILATION_RADIUS, ge=0)
    pair_shadows: bool = False


class RefConfig(BaseModel):
    enabled: Optional[bool] = None
    policy: Union[Literal["min_hole_area"], int] = "min_hole_area"
    position: Literal["prepend", "adjacent"] = "prepend"


class IOConfig(BaseModel):
    root: Optional[str] = None
    frames: Optional[str] = None
    masks: Optional[str] = None
    plate: Optional[str] = None
    sprite_masks: Optional[str] = None
    shadow_masks: Optional[str] = None
    out: Optional[str] = None

    def path(self, name: str) -> Optional[str]:
        """Explicit path, else <root>/<name>"""
        explicit = getattr(self, name)
        if explicit:
            return explicit
        return os.path.join(self.root, name) if self.root else None


class PipelineConfig(BaseModel):
    seed: int = SEED
    threads: int = Field(max(1, THREADS), ge=1)
    debug_dir: Optional[str] = DEBUG_DIR
    fps: float = Field(DEFAULT_FPS, gt=0)
    composite_feather: int = Field(COMPOSITE_FEATHER, ge=0)
    stages: StageToggles = Field(default_factory=StageToggles)
    fusion: FusionConfig = Field(default_factory=FusionConfig)
    sampler: SamplerConfig = Field(default_factory=SamplerConfig)
    denoiser: DenoiserConfig = Field(default_factory=DenoiserConfig)
    flow: FlowConfig = Field(default_factory=FlowConfig)
    masks: MaskConfig = Field(default_factory=MaskConfig)
    pairing: PairingParams = Field(default_factory=PairingParams)
    ref: RefConfig = Field(default_factory=RefConfig)
    io: IOConfig = Field(default_factory=IOConfig)

    @model_validator(mode="after")
    def _consistent(self) -> "PipelineConfig":
        if self.ref.enabled is not None:
            self.stages.ref_frame = self.ref.enabled
        if any(s > self.sampler.inference_steps for s in self.fusion.fusion_steps):
            raise ValueError(
                f"fusion_steps {self.fusion.fusion_steps} exceed {self.sampler.inference_steps} inference steps"
            )
        return self


def set_dotted(data: Dict[str, Any], key: str, value: Any):
    """Assign data['a']['b'] = value for key 'a.b'"""
    parts = key.split(".")
    node = data
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise InvalidArgument(f"config key {key!r} collides with a scalar value")
    node[parts[-1]] = value


def _merge(base: Dict[str, Any], extra: Dict[str, Any]) -> Dict[str, Any]:
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _merge(base[key], value)
        else:
            base[key] = value
    return base


def load_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> PipelineConfig:
    """Build a PipelineConfig from an optional dotted-key file, VIP_* env vars and overrides"""
    data: Dict[str, Any] = {}
    if path:
        try:
            parsed = toml.load(path)
        except (OSError, toml.TomlDecodeError) as e:
            raise IoError(f"Error reading config {path}: {e}") from e
        # quoted keys such as "fusion.window_len" arrive flat
        for key, value in parsed.items():
            if "." in key:
                set_dotted(data, key, value)
            else:
                _merge(data, {key: value})
        logger.info(f"✅ Loaded config from {path}")
    for env_key, field_name in _ENV_KEYS.items():
        if os.getenv(env_key):
            data[field_name] = os.getenv(env_key)
    layered: Dict[str, Any] = {}
    for key, value in (overrides or {}).items():
        if value is not None:
            set_dotted(layered, key, value)
    _merge(data, layered)
    try:
        return PipelineConfig.model_validate(data)
    except ValidationError as e:
        raise InvalidArgument(f"Invalid configuration: {e}") from e


def config_to_toml(cfg: PipelineConfig) -> str:
    return toml.dumps(cfg.model_dump(exclude_none=True))
