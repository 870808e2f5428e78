"""Sequence encoding and (partial) decoding with GOP intra refresh."""
from __future__ import annotations

import contextlib
import functools
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from .. import probability as prob
from ..entropy import TableBank, decode_chunk, encode_chunk
from ..errors import ConfigurationError, CorruptChunkError, FormatError, InputError, TruncationError
from ..numerics import Tensor, no_grad, precision, precision_bits
from ..numerics.ops import reflect_pad_to_multiple
from .container import INTER, INTRA, Chunk, Container, FrameRecord, SequenceHeader, lambda_index
from .stats import (CODED, CORRUPT, DECODED, DROPPED, NOT_REQUESTED, STALE, DecodeStats, EncodeStats,
                    FrameStat, ScaleStat)


@functools.lru_cache(maxsize=1)
def default_bank() -> TableBank:
    return TableBank(prob.default_tables())


@contextlib.contextmanager
def model_precision(model, bits: int) -> Iterator[None]:
    """Run ``model`` at ``bits`` precision, restoring its original arrays afterwards."""
    saved = [(p, p.data) for p in model.parameters()]
    with precision(bits):
        for p, d in saved:
            p.data = d.astype(np.float64 if bits == 64 else np.float32)
        try:
            yield
        finally:
            for p, d in saved:
                p.data = d


@dataclass
class DecodeOptions:
    """Which chunks to decode.

    ``max_scales`` keeps the first k scales of every frame (``None`` = all).
    ``drop_pattern`` maps frame index to scale indices treated as lost.
    With ``strict_dependencies`` a present chunk whose prior cannot be
    reproduced (a coarser scale of the same frame, or the same scale of a
    context frame, was filled rather than decoded) is filled instead of being
    decoded against a mismatched table.
    """

    max_scales: Optional[int] = None
    drop_pattern: dict[int, set[int]] = field(default_factory=dict)
    strict_dependencies: bool = True


@dataclass
class EncodeResult:
    container: bytes
    stats: EncodeStats
    reconstructions: np.ndarray


@dataclass
class DecodeResult:
    frames: np.ndarray
    stats: DecodeStats


def _as_frames(frames) -> np.ndarray:
    if isinstance(frames, (list, tuple)):
        shapes = {np.shape(f) for f in frames}
        if len(shapes) > 1:
            raise InputError(f"all frames must share dims, got {sorted(shapes)}")
    arr = np.asarray(frames, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4 or (arr.shape[0] and arr.shape[1] != 3):
        raise InputError(f"expected (T, 3, H, W) frames, got shape {arr.shape}")
    if arr.size and not np.all(np.isfinite(arr)):
        raise InputError("frames contain non-finite values")
    return arr


def _history_trim(history: list, length: int) -> list:
    return history[-length:]


def encode_sequence(frames, model, gop_size: int = 32, bits: Optional[int] = None) -> EncodeResult:
    """Encode (T, 3, H, W) frames in [0, 1]; returns container bytes, stats and the closed-loop x̂."""
    from ..harness.metrics import psnr

    x_all = _as_frames(frames)
    t_count = x_all.shape[0]
    h, w = x_all.shape[2], x_all.shape[3]
    bits = bits or precision_bits()
    cfg = model.cfg
    header = SequenceHeader(cfg.config_hash(), w, h, t_count, gop_size, cfg.num_scales,
                            lambda_index(cfg.lmbda), bits)
    stats = EncodeStats(w, h)
    recons = []
    records = []
    bank = default_bank()
    keep = cfg.temporal_context_len
    with model_precision(model, bits), no_grad():
        history: list = []
        for t in range(t_count):
            intra = t % gop_size == 0
            if intra:
                history = []
            x = reflect_pad_to_multiple(x_all[t][None], cfg.coarsest_factor)
            fs = model.frame_forward(Tensor(x), model.context(history), mode="encode")
            rec = FrameRecord(INTRA if intra else INTER)
            fstat = FrameStat(t, "intra" if intra else "inter", h * w)
            for l, s in enumerate(fs.scales):
                idx = prob.quantize_sigma(s.prior.sigma_hat)
                payload = encode_chunk(s.symbols, bank, idx)
                rec.chunks.append(Chunk(l, payload.data))
                fstat.scales.append(ScaleStat(l, 8 * len(payload.data), CODED, s.clamped, float(s.rate_bits)))
            x_hat = np.array(fs.x_hat.data[0, :, :h, :w])
            fstat.psnr = psnr(x_all[t], x_hat)
            recons.append(x_hat)
            records.append(rec)
            stats.frames.append(fstat)
            history = _history_trim(history + [fs], keep)
    data = Container(header, records).pack()
    stats.container_bytes = len(data)
    dtype = np.float64 if bits == 64 else np.float32
    recon_arr = np.stack(recons) if recons else np.zeros((0, 3, h, w), dtype=dtype)
    return EncodeResult(data, stats, recon_arr)


def decode_sequence(data: bytes, model, opts: Optional[DecodeOptions] = None,
                    reference=None) -> DecodeResult:
    """Decode a container, filling every missing or unusable scale with its prior mean.

    ``reference`` (optional original frames) enables per-frame PSNR in the stats.
    """
    from ..harness.metrics import psnr

    opts = opts or DecodeOptions()
    container = Container.unpack(data)
    hdr = container.header
    cfg = model.cfg
    if hdr.config_hash != cfg.config_hash():
        raise ConfigurationError("container config hash does not match the model")
    if hdr.num_scales != cfg.num_scales:
        raise FormatError(f"container has {hdr.num_scales} scales, model has {cfg.num_scales}")
    n_scales = cfg.num_scales
    k_max = n_scales if opts.max_scales is None else int(opts.max_scales)
    if not 1 <= k_max <= n_scales:
        raise ConfigurationError(f"max_scales must be in [1, {n_scales}], got {opts.max_scales}")
    ref = _as_frames(reference) if reference is not None else None
    h, w = hdr.height, hdr.width
    m = cfg.coarsest_factor
    hp, wp = h + (-h) % m, w + (-w) % m
    shapes = model.scale_shapes(hp, wp) if hdr.frame_count else []
    bank = default_bank()
    keep = cfg.temporal_context_len
    stats = DecodeStats(w, h, container_bytes=len(data))
    out = []
    with model_precision(model, hdr.precision), no_grad():
        history: list = []
        exact_hist: list[list[bool]] = []
        for t, rec in enumerate(container.frames):
            intra = t % hdr.gop_size == 0
            if (rec.frame_type == INTRA) != intra:
                raise FormatError(f"frame {t}: frame type disagrees with gop_size {hdr.gop_size}")
            if intra:
                history, exact_hist = [], []
            ctx = model.context(history)
            ctx_ok = [True] * n_scales
            if not ctx.is_intra:
                ctx_ok = [all(e[l] for e in exact_hist) for l in range(n_scales)]
            dropped = set(opts.drop_pattern.get(t, ()))
            exact = [False] * n_scales
            fstat = FrameStat(t, "intra" if intra else "inter", h * w,
                              [ScaleStat(l, 0, NOT_REQUESTED) for l in range(n_scales)])
            errors = []

            def fetch(l, prior, rec=rec, dropped=dropped, exact=exact, fstat=fstat, ctx_ok=ctx_ok,
                      errors=errors):
                st = fstat.scales[l]
                if l >= k_max:
                    return None
                chunk = rec.chunk_for(l)
                if l in dropped or chunk is None:
                    st.status = DROPPED
                    return None
                if opts.strict_dependencies and not (all(exact[:l]) and ctx_ok[l]):
                    st.status = STALE
                    return None
                if not chunk.intact:
                    st.status = CORRUPT
                    errors.append(f"scale {l}: crc mismatch")
                    return None
                idx = prob.quantize_sigma(prior.sigma_hat)
                try:
                    sym = decode_chunk(chunk.payload, bank, idx, symbol_count=idx.size)
                except (TruncationError, CorruptChunkError) as exc:
                    st.status = CORRUPT
                    errors.append(f"scale {l}: {exc}")
                    return None
                st.status = DECODED
                st.bits = 8 * len(chunk.payload)
                exact[l] = True
                return sym.reshape(shapes[l])[None]

            fs = model.frame_forward(None, ctx, mode="decode", fetch=fetch, hw=(hp, wp), batch=1)
            if errors:
                fstat.error = "; ".join(errors)
            x_hat = np.array(fs.x_hat.data[0, :, :h, :w])
            if ref is not None and t < ref.shape[0]:
                fstat.psnr = psnr(ref[t], x_hat)
            out.append(x_hat)
            stats.frames.append(fstat)
            history = _history_trim(history + [fs], keep)
            exact_hist = _history_trim(exact_hist + [exact], keep)
    dtype = np.float64 if hdr.precision == 64 else np.float32
    frames = np.stack(out) if out else np.zeros((0, 3, h, w), dtype=dtype)
    return DecodeResult(frames, stats)
