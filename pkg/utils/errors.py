class VipError(Exception):
    """Base exception for the inpainting pipeline"""
    pass


class MissingFrame(VipError):
    """Custom exception for a gap in a frame directory"""

    def __init__(self, index: int):
        super().__init__(f"Missing frame index {index}")
        self.index = index


class DimensionMismatch(VipError):
    """Custom exception for arrays whose shapes do not agree"""
    pass


class DecodeError(VipError):
    """Custom exception for files that cannot be decoded as images"""
    pass


class IoError(VipError):
    """Custom exception for unwritable or unreadable paths"""
    pass


class EmptyClip(VipError):
    """Custom exception for clips or mask sequences without frames"""
    pass


class InvalidArgument(VipError, ValueError):
    """Custom exception for out-of-range parameters"""
    pass


class InvalidLatent(VipError):
    """Custom exception for non-finite latent tensors"""
    pass


class ContractViolation(VipError):
    """Custom exception for denoisers that break the output shape contract"""
    pass


class PlanViolation(VipError):
    """Custom exception for window latents that do not match a segment plan"""
    pass


class StageError(VipError):
    """Custom exception tagging a pipeline failure with its stage"""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
