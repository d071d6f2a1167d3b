"""Complexity-aware masked motion generation at desk scale."""

from .core import MASK, Codebook, Config, MotionSequence, SpectralProfile, TextCondition, TokenState, validate_config, zscore

__all__ = ["MASK", "Codebook", "Config", "MotionSequence", "SpectralProfile", "TextCondition",
           "TokenState", "validate_config", "zscore"]
