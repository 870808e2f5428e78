"""Frame file I/O: planar 8-bit RGB (``.rgb``) and numpy arrays (``.npy``)."""
from __future__ import annotations

from pathlib import Path
from typing import Optional

import numpy as np

from ..errors import InputError
from .metrics import to_uint8


def read_raw_rgb(path: str | Path, width: int, height: int, max_frames: Optional[int] = None) -> np.ndarray:
    """Read planar RGB frames (R plane, G plane, B plane per frame) as (T, 3, H, W) in [0, 1]."""
    if width < 1 or height < 1:
        raise InputError("raw input needs positive --width and --height")
    data = np.fromfile(path, dtype=np.uint8)
    frame = 3 * width * height
    if data.size % frame:
        raise InputError(f"{path}: size {data.size} is not a multiple of the frame size {frame}")
    frames = data.reshape(-1, 3, height, width)
    if max_frames is not None:
        frames = frames[:max_frames]
    return frames.astype(np.float64) / 255.0


def write_raw_rgb(path: str | Path, frames: np.ndarray) -> None:
    to_uint8(np.asarray(frames)).tofile(path)


def load_frames(path: str | Path, width: Optional[int] = None, height: Optional[int] = None,
                max_frames: Optional[int] = None) -> np.ndarray:
    p = Path(path)
    if not p.exists():
        raise InputError(f"no such input file: {p}")
    if p.suffix == ".npy":
        arr = np.load(p)
        if arr.ndim == 3:
            arr = arr[None]
        if arr.ndim != 4 or arr.shape[1] != 3:
            raise InputError(f"{p}: expected (T, 3, H, W) array, got {arr.shape}")
        if arr.dtype == np.uint8:
            arr = arr.astype(np.float64) / 255.0
        return np.asarray(arr[:max_frames] if max_frames else arr, dtype=np.float64)
    if width is None or height is None:
        raise InputError("raw RGB input needs --width and --height")
    return read_raw_rgb(p, width, height, max_frames)


def save_frames(path: str | Path, frames: np.ndarray) -> None:
    p = Path(path)
    if p.suffix == ".npy":
        np.save(p, np.asarray(frames))
    else:
        write_raw_rgb(p, frames)
