"""Hierarchical predictive VAE model and its configuration."""
from .config import ModelConfig, ScaleSpec, desk_config, full_config, preset, toy_config
from .network import (
    FrameState,
    HierarchicalVideoModel,
    ScaleState,
    TemporalContext,
    make_context,
)

__all__ = [
    "ModelConfig", "ScaleSpec", "desk_config", "full_config", "preset", "toy_config", "FrameState",
    "HierarchicalVideoModel", "ScaleState", "TemporalContext", "make_context",
]
