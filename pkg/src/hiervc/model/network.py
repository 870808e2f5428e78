"""The hierarchical predictive VAE: bottom-up path, Latent Blocks, output head.

Top-down order is coarse -> fine (scale index 0 is the smallest latent). Each
Latent Block

1. upsamples the previous prior feature ``f`` and reconstructive feature ``d``
   (or starts from learned constants at the coarsest block),
2. fuses the temporal slots (previous latents or learned biases) through
   stacked residual blocks, concatenates the spatial prior ``f`` and generates
   the contextual feature ``c`` plus the prior mean/scale,
3. obtains the latent ``z`` (noisy/straight-through in training, residual
   rounding when encoding, decoded symbols when decoding),
4. updates ``f`` with the embedded latent and forms ``d`` from
   ``(d_prev, c, f)`` when decoding fusion is enabled (``d = f`` otherwise).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import ConfigurationError, UsageError
from ..numerics import ConvNeXtBlock, Conv2d, ConvSpec, Module, Parameter, Tensor, Upsample, conv1x1, ops
from ..numerics.tensor import is_grad_enabled
from .. import probability as prob
from .config import ModelConfig, ScaleSpec

MODES = ("train", "encode", "decode")


@dataclass
class ScaleState:
    z: Tensor
    f: Tensor
    d: Tensor
    c: Tensor
    prior: prob.PriorParams
    posterior: Optional[prob.PosteriorParams]
    rate_bits: object  # Tensor in training mode, float otherwise
    symbols: Optional[np.ndarray] = None
    clamped: int = 0
    present: bool = True


@dataclass
class FrameState:
    scales: list[ScaleState]
    x_hat: Tensor

    @property
    def latents(self) -> list[Tensor]:
        return [s.z for s in self.scales]

    def total_rate(self):
        """Sum of per-scale rates (a Tensor in training mode)."""
        total = self.scales[0].rate_bits
        for s in self.scales[1:]:
            total = total + s.rate_bits
        return total

    def rate_per_scale(self) -> list[float]:
        return [float(s.rate_bits.item() if isinstance(s.rate_bits, Tensor) else s.rate_bits)
                for s in self.scales]


@dataclass
class TemporalContext:
    """Per scale, the temporal slots; ``None`` marks a learned-bias slot."""

    slots: list[list[Optional[Tensor]]]

    @property
    def is_intra(self) -> bool:
        return all(s is None for per_scale in self.slots for s in per_scale)


def make_context(history: Sequence[FrameState], num_scales: int, length: int = 2) -> TemporalContext:
    """Slots ``[z_{t-1}, z_{t-2}, ...]`` per scale from the frames coded so far in this GOP.

    Empty history gives all-bias slots; a short history repeats the newest latent.
    """
    if not history:
        return TemporalContext([[None] * length for _ in range(num_scales)])
    recent = list(history)[::-1][:length]
    while len(recent) < length:
        recent.append(recent[0])
    return TemporalContext([[fs.scales[l].z for fs in recent] for l in range(num_scales)])


class BottomUp(Module):
    """Strided-conv downsampling plus ConvNeXt aggregation; taps one feature per Latent Block."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, res_scale: float):
        fine = cfg.scales[-1]
        self.stem = Conv2d(ConvSpec(3, fine.channels, (cfg.stem, cfg.stem), cfg.stem), rng, std=None)
        self.stages = []
        cur_f, cur_c = cfg.stem, fine.channels
        for spec in reversed(cfg.scales):
            stage = _BottomUpStage(cur_f, cur_c, spec, cfg, rng, res_scale)
            self.stages.append(stage)
            cur_f, cur_c = spec.factor, spec.channels

    def __call__(self, x: Tensor) -> list[Tensor]:
        h = self.stem(x)
        feats = []
        for stage in self.stages:
            h = stage(h)
            feats.append(h)
        return feats[::-1]  # coarse -> fine


class _BottomUpStage(Module):
    def __init__(self, cur_f: int, cur_c: int, spec: ScaleSpec, cfg: ModelConfig, rng, res_scale):
        ratio = spec.factor // cur_f
        if ratio > 1:
            self.down = Conv2d(ConvSpec(cur_c, spec.channels, (ratio, ratio), ratio), rng, std=None)
        elif cur_c != spec.channels:
            self.down = conv1x1(cur_c, spec.channels, rng, std=None)
        else:
            self.down = None
        self.blocks = [ConvNeXtBlock(spec.channels, rng, cfg.expansion, cfg.kernel, res_scale)
                       for _ in range(cfg.blocks_per_scale)]

    def __call__(self, h: Tensor) -> Tensor:
        if self.down is not None:
            h = self.down(h)
        for blk in self.blocks:
            h = blk(h)
        return h


class LatentBlock(Module):
    def __init__(self, spec: ScaleSpec, prev: Optional[ScaleSpec], cfg: ModelConfig,
                 rng: np.random.Generator, res_scale: float):
        c, zc = spec.channels, spec.latent_channels
        self.spec = spec
        self.use_tp = cfg.enable_temporal_prediction
        self.use_df = cfg.enable_decoding_fusion
        if prev is not None:
            r = prev.factor // spec.factor
            self.up_f = Upsample(prev.channels, c, r, rng, std=None)
            self.up_d = Upsample(prev.channels, c, r, rng, std=None) if self.use_df else None
        else:
            self.up_f = self.up_d = None
        self.slot_bias = [Parameter(np.zeros((1, zc, 1, 1))) for _ in range(cfg.temporal_context_len)]
        self.tf_in = conv1x1(cfg.temporal_context_len * zc, c, rng, std=None)
        self.tf_blocks = [ConvNeXtBlock(c, rng, cfg.expansion, cfg.kernel, res_scale)
                          for _ in range(cfg.fusion_depth)]
        self.gen_in = conv1x1(2 * c, c, rng, std=None)
        self.gen_block = ConvNeXtBlock(c, rng, cfg.expansion, cfg.kernel, res_scale)
        self.gen_out = conv1x1(c, c + 2 * zc, rng, std=None)
        self.post_in = conv1x1(2 * c, c, rng, std=None)
        self.post_block = ConvNeXtBlock(c, rng, cfg.expansion, cfg.kernel, res_scale)
        self.post_out = conv1x1(c, zc, rng, std=None)
        self.z_proj = conv1x1(zc, c, rng, std=None)
        self.f_block = ConvNeXtBlock(c, rng, cfg.expansion, cfg.kernel, res_scale)
        if self.use_df:
            self.fuse_in = conv1x1(3 * c, c, rng, std=None)
            self.fuse_block = ConvNeXtBlock(c, rng, cfg.expansion, cfg.kernel, res_scale)

    def slots_tensor(self, slots: Sequence[Optional[Tensor]], n: int, hw: tuple[int, int]) -> Tensor:
        zc = self.spec.latent_channels
        parts = []
        for k, s in enumerate(slots):
            if s is None or not self.use_tp:
                parts.append(ops.expand(self.slot_bias[k], (n, zc, *hw)))
            else:
                if s.shape != (n, zc, *hw):
                    raise ConfigurationError(
                        f"temporal slot shape {s.shape} != expected {(n, zc, *hw)} at factor {self.spec.factor}")
                parts.append(s)
        return ops.concat(parts, axis=1)

    def predict(self, f_prev: Tensor, slots: Sequence[Optional[Tensor]]):
        """Spatial-temporal prediction: returns (c, mu_hat, sigma_hat)."""
        n, _, h, w = f_prev.shape
        fused = self.tf_in(self.slots_tensor(slots, n, (h, w)))
        for blk in self.tf_blocks:
            fused = blk(fused)
        g = self.gen_in(ops.concat([f_prev, fused], axis=1))
        g = self.gen_out(self.gen_block(g))
        c, zc = self.spec.channels, self.spec.latent_channels
        ctx = ops.slice_channels(g, 0, c)
        mu_hat = ops.slice_channels(g, c, c + zc)
        sigma = ops.clamp(ops.softplus(ops.slice_channels(g, c + zc, c + 2 * zc)), prob.SIGMA_MIN, prob.SIGMA_MAX)
        return ctx, mu_hat, sigma

    def posterior(self, r: Tensor, f_prev: Tensor) -> Tensor:
        h = self.post_in(ops.concat([r, f_prev], axis=1))
        return self.post_out(self.post_block(h))

    def update(self, f_prev: Tensor, d_prev: Tensor, z: Tensor, ctx: Tensor) -> tuple[Tensor, Tensor]:
        f = self.f_block(f_prev + self.z_proj(z))
        if not self.use_df:
            return f, f
        d = self.fuse_block(self.fuse_in(ops.concat([d_prev, ctx, f], axis=1)))
        return f, d


class OutputHead(Module):
    def __init__(self, spec: ScaleSpec, cfg: ModelConfig, rng, res_scale):
        self.block = ConvNeXtBlock(spec.channels, rng, cfg.expansion, cfg.kernel, res_scale)
        self.up = Upsample(spec.channels, 3, spec.factor, rng, std=None)

    def __call__(self, d: Tensor) -> Tensor:
        return self.up(self.block(d)) + 0.5


SymbolFetch = Callable[[int, prob.PriorParams], Optional[np.ndarray]]


class HierarchicalVideoModel(Module):
    """Single model for intra and inter frames; intra = all temporal slots are biases."""

    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.init_seed)
        per_block = 1 + cfg.fusion_depth + 3 + (1 if cfg.enable_decoding_fusion else 0)
        n_blocks = cfg.num_scales * (per_block + cfg.blocks_per_scale) + 1
        res_scale = 1.0 / math.sqrt(n_blocks)
        self.bottom_up = BottomUp(cfg, rng, res_scale)
        c0 = cfg.scales[0].channels
        self.f0 = Parameter(np.zeros((1, c0, 1, 1)))
        self.d0 = Parameter(np.zeros((1, c0, 1, 1)))
        self.blocks = []
        prev = None
        for spec in cfg.scales:
            self.blocks.append(LatentBlock(spec, prev, cfg, rng, res_scale))
            prev = spec
        self.head = OutputHead(cfg.scales[-1], cfg, rng, res_scale)

    @property
    def num_scales(self) -> int:
        return self.cfg.num_scales

    def scale_shapes(self, h: int, w: int) -> list[tuple[int, int, int]]:
        self.check_dims(h, w)
        return [(s.latent_channels, h // s.factor, w // s.factor) for s in self.cfg.scales]

    def check_dims(self, h: int, w: int) -> None:
        m = self.cfg.coarsest_factor
        if h % m or w % m:
            raise ConfigurationError(f"frame dims {(h, w)} are not multiples of the coarsest factor {m}")

    def bottom_up_features(self, x: Tensor) -> list[Tensor]:
        if x.ndim != 4 or x.shape[1] != 3:
            raise ConfigurationError(f"expected (N, 3, H, W) frames, got {x.shape}")
        self.check_dims(*x.shape[2:])
        return self.bottom_up(x - 0.5)

    def empty_context(self) -> TemporalContext:
        return make_context([], self.num_scales, self.cfg.temporal_context_len)

    def context(self, history: Sequence[FrameState]) -> TemporalContext:
        if not self.cfg.enable_temporal_prediction:
            return self.empty_context()
        return make_context(history, self.num_scales, self.cfg.temporal_context_len)

    def frame_forward(self, x: Optional[Tensor], ctx: TemporalContext, mode: str = "train",
                      rng: Optional[np.random.Generator] = None, fetch: Optional[SymbolFetch] = None,
                      recon: str = "ste", hw: Optional[tuple[int, int]] = None,
                      batch: int = 1) -> FrameState:
        """Code one frame through all Latent Blocks, coarse to fine.

        ``train`` needs ``x`` and ``rng`` (rate uses ``mu + U(-1/2, 1/2)``;
        reconstruction uses straight-through rounding, or the same noisy latent
        when ``recon="noise"``). ``encode`` uses residual rounding. ``decode``
        takes no frame: ``fetch(l, prior)`` returns the decoded integer
        residuals for scale ``l`` or ``None`` when that scale is missing, in
        which case the latent is the prior mean.
        """
        if mode not in MODES:
            raise UsageError(f"mode must be one of {MODES}, got {mode!r}")
        if mode == "train":
            if rng is None:
                raise UsageError("training mode needs an rng for quantization noise")
            if not is_grad_enabled():
                raise UsageError("training mode needs gradient recording enabled")
        if mode == "decode":
            if fetch is None or hw is None:
                raise UsageError("decode mode needs fetch() and hw")
            feats = None
            n = batch
            h, w = hw
            self.check_dims(h, w)
        else:
            if x is None:
                raise UsageError(f"{mode} mode needs the input frame")
            x = x if isinstance(x, Tensor) else Tensor(x)
            feats = self.bottom_up_features(x)
            n, _, h, w = x.shape
        if len(ctx.slots) != self.num_scales:
            raise ConfigurationError(f"context has {len(ctx.slots)} scales, model has {self.num_scales}")

        states: list[ScaleState] = []
        f_prev = d_prev = None
        for l, blk in enumerate(self.blocks):
            spec = blk.spec
            hl, wl = h // spec.factor, w // spec.factor
            if l == 0:
                c0 = spec.channels
                f_prev = ops.expand(self.f0, (n, c0, hl, wl))
                d_prev = ops.expand(self.d0, (n, c0, hl, wl))
            else:
                f_in = f_prev
                f_prev = blk.up_f(f_in)
                d_prev = blk.up_d(d_prev) if blk.up_d is not None else f_prev
            ctx_feat, mu_hat, sigma = blk.predict(f_prev, ctx.slots[l])
            prior = prob.PriorParams(mu_hat.data, sigma.data)
            posterior = None
            symbols = None
            clamped = 0
            present = True
            if mode == "train":
                mu = blk.posterior(feats[l], f_prev)
                posterior = prob.PosteriorParams(mu.data)
                z_rate = prob.quantize_train_rate(mu, rng)
                rate = prob.rate_bits(z_rate, mu_hat, sigma)
                z = prob.quantize_train_recon(mu) if recon == "ste" else z_rate
            elif mode == "encode":
                mu = blk.posterior(feats[l], f_prev)
                posterior = prob.PosteriorParams(mu.data)
                rr = prob.residual_round(mu.data, mu_hat.data)
                symbols, clamped = rr.symbols, rr.clamped
                z = Tensor(rr.z)
                idx, tables = prob.build_pmf(prior)
                rate = prob.table_bits(symbols, idx, tables)
            else:
                symbols = fetch(l, prior)
                if symbols is None:
                    present = False
                    z = Tensor(mu_hat.data.copy())
                    rate = 0.0
                else:
                    symbols = np.asarray(symbols, dtype=np.int32).reshape(mu_hat.shape)
                    z = Tensor(mu_hat.data + symbols.astype(mu_hat.data.dtype))
                    idx, tables = prob.build_pmf(prior)
                    rate = prob.table_bits(symbols, idx, tables)
            f_prev, d_prev = blk.update(f_prev, d_prev, z, ctx_feat)
            states.append(ScaleState(z=z, f=f_prev, d=d_prev, c=ctx_feat, prior=prior, posterior=posterior,
                                     rate_bits=rate, symbols=symbols, clamped=clamped, present=present))
        x_hat = self.head(d_prev)
        return FrameState(scales=states, x_hat=x_hat)
