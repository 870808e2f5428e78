from __future__ import annotations

import math

import numpy as np

from ..errors import InputError

PSNR_CAP = 99.0


def to_uint8(frame: np.ndarray) -> np.ndarray:
    """Clip to [0, 1] and round to 8-bit levels (ties away from zero)."""
    return np.floor(np.clip(np.asarray(frame, dtype=np.float64), 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def psnr(a: np.ndarray, b: np.ndarray, quantize: bool = True) -> float:
    """Peak signal-to-noise ratio in dB for frames with values in [0, 1].

    With ``quantize`` both frames are first rounded to 8-bit RGB. Identical
    frames return ``PSNR_CAP``.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise InputError(f"psnr: frame shapes differ, {a.shape} vs {b.shape}")
    if quantize:
        fa = to_uint8(a).astype(np.float64) / 255.0
        fb = to_uint8(b).astype(np.float64) / 255.0
    else:
        fa, fb = a.astype(np.float64), b.astype(np.float64)
    mse = float(np.mean((fa - fb) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))


def bpp(bits: float, height: int, width: int) -> float:
    return bits / float(height * width)
