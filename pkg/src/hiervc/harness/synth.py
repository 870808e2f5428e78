"""Procedural textures and the synthetic temporal patterns (shift, blur, fade)."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.ndimage import gaussian_filter

from ..errors import InputError

PATTERNS = ("shift", "blur", "fade")

log = logging.getLogger(__name__)


def texture_image(rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    """A random (3, H, W) image in [0, 1]: smooth colour noise, a gradient and a few shapes."""
    img = np.zeros((3, height, width))
    yy, xx = np.mgrid[0:height, 0:width] / max(height, width)
    angle = rng.uniform(0, 2 * np.pi)
    ramp = np.cos(angle) * xx + np.sin(angle) * yy
    img += rng.uniform(0.2, 0.8, (3, 1, 1)) + rng.uniform(-0.3, 0.3, (3, 1, 1)) * ramp
    for _ in range(rng.integers(1, 3)):
        sigma = rng.uniform(0.8, 4.0)
        noise = gaussian_filter(rng.standard_normal((3, height, width)), (0, sigma, sigma), mode="wrap")
        noise /= noise.std() + 1e-8
        img += rng.uniform(0.03, 0.15) * noise
    for _ in range(rng.integers(1, 5)):
        colour = rng.uniform(0, 1, (3, 1, 1))
        cy, cx = rng.uniform(0, 1, 2)
        ry, rx = rng.uniform(0.08, 0.35, 2)
        if rng.random() < 0.5:
            mask = (np.abs(yy - cy) < ry) & (np.abs(xx - cx) < rx)
        else:
            mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 < 1.0
        alpha = rng.uniform(0.5, 1.0)
        img = np.where(mask[None], (1 - alpha) * img + alpha * colour, img)
    return np.clip(img, 0.0, 1.0)


@dataclass
class SyntheticSpec:
    pattern: str = "shift"
    x: float = 0.0
    num_frames: int = 8
    height: int = 32
    width: int = 32
    base_images: Optional[list[np.ndarray]] = field(default=None, repr=False)

    def __post_init__(self):
        if self.pattern not in PATTERNS:
            raise InputError(f"pattern must be one of {PATTERNS}, got {self.pattern!r}")
        if self.num_frames < 1 or self.height < 1 or self.width < 1:
            raise InputError("num_frames and dims must be positive")
        if self.pattern == "shift" and float(self.x) != int(self.x):
            raise InputError("shift takes an integer number of pixels per frame")
        if self.x < 0:
            raise InputError("pattern parameter must be non-negative")


def synth_generate(spec: SyntheticSpec, seed: int = 0) -> np.ndarray:
    """Deterministic (T, 3, H, W) float64 clip in [0, 1].

    shift: frame ``t`` is the base image rolled right by ``x * t`` pixels
    (toroidal). blur: Gaussian blur with sigma ``x * t``. fade: linear alpha
    blend from the first scene (t=0) to a second, unrelated scene (t=T-1).
    """
    if spec.pattern == "shift" and 2 * abs(int(spec.x)) >= spec.width:
        log.warning("shift %d on width %d wraps to an equivalent shift of %d", spec.x, spec.width,
                    (int(spec.x) + spec.width // 2) % spec.width - spec.width // 2)
    rng = np.random.default_rng(seed)
    bases = spec.base_images
    if bases is None:
        bases = [texture_image(rng, spec.height, spec.width) for _ in range(2)]
    a = np.asarray(bases[0], dtype=np.float64)
    if a.shape != (3, spec.height, spec.width):
        raise InputError(f"base image shape {a.shape} != {(3, spec.height, spec.width)}")
    frames = np.empty((spec.num_frames, 3, spec.height, spec.width))
    for t in range(spec.num_frames):
        if spec.pattern == "shift":
            frames[t] = np.roll(a, int(spec.x) * t, axis=-1)
        elif spec.pattern == "blur":
            s = spec.x * t
            frames[t] = gaussian_filter(a, (0, s, s), mode="reflect") if s > 0 else a
        else:
            if len(bases) < 2:
                raise InputError("fade needs two base images")
            b = np.asarray(bases[1], dtype=np.float64)
            alpha = t / (spec.num_frames - 1) if spec.num_frames > 1 else 0.0
            frames[t] = b if alpha == 1.0 else (1.0 - alpha) * a + alpha * b
    return frames


def still_clips(rng: np.random.Generator, batch: int, frames: int, size: int) -> np.ndarray:
    """A (B, T, 3, H, W) batch of still clips, one fresh texture per clip."""
    imgs = np.stack([texture_image(rng, size, size) for _ in range(batch)])
    return np.repeat(imgs[:, None], frames, axis=1)


def eval_clips(count: int = 4, frames: int = 4, size: int = 32, seed: int = 12345) -> np.ndarray:
    """Fixed held-out still clips (N, T, 3, H, W)."""
    return still_clips(np.random.default_rng(seed), count, frames, size)
