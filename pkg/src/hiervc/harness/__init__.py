"""Training, synthetic data, metrics, experiment recipes and the CLI."""
from .metrics import PSNR_CAP, psnr, to_uint8
from .optim import Adam, clip_grad_norm
from .synth import PATTERNS, SyntheticSpec, eval_clips, still_clips, synth_generate, texture_image
from .train import TrainConfig, TrainResult, clip_loss, evaluate, frame_loss, train

__all__ = [
    "PSNR_CAP", "psnr", "to_uint8", "Adam", "clip_grad_norm", "PATTERNS", "SyntheticSpec", "eval_clips",
    "still_clips", "synth_generate", "texture_image", "TrainConfig", "TrainResult", "clip_loss", "evaluate",
    "frame_loss", "train",
]
