"""Layer containers built on the op set: conv, ConvNeXt residual block, upsampler."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from ..errors import ConfigurationError
from . import ops
from .tensor import Tensor, get_dtype


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel: tuple[int, int] = (1, 1)
    stride: int = 1
    padding: int | str = 0
    groups: int = 1

    def __post_init__(self):
        if self.stride < 1 or min(self.kernel) < 1:
            raise ConfigurationError(f"invalid ConvSpec {self}")
        if isinstance(self.padding, str) and self.padding != "same":
            raise ConfigurationError(f"padding mode must be an int or 'same', got {self.padding!r}")

    @property
    def pad(self) -> int:
        if self.padding == "same":
            if self.stride != 1 or self.kernel[0] != self.kernel[1] or self.kernel[0] % 2 == 0:
                raise ConfigurationError("'same' padding needs stride 1 and an odd square kernel")
            return self.kernel[0] // 2
        return int(self.padding)

    @property
    def weight_shape(self) -> tuple[int, int, int, int]:
        return (self.out_channels, self.in_channels // self.groups, *self.kernel)

    def output_hw(self, h: int, w: int) -> tuple[int, int]:
        return (ops.conv_output_size(h, self.kernel[0], self.stride, self.pad),
                ops.conv_output_size(w, self.kernel[1], self.stride, self.pad))


def trunc_normal(rng: np.random.Generator, shape, std: float = 0.02) -> np.ndarray:
    """Normal(0, std) truncated to +-2 std by resampling."""
    out = rng.standard_normal(shape)
    bad = np.abs(out) > 2.0
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > 2.0
    return out * std


def Parameter(data) -> Tensor:
    return Tensor(np.asarray(data, dtype=get_dtype()), requires_grad=True)


class Module:
    """Attribute-registered parameter container.

    Parameters are every ``Tensor`` attribute with ``requires_grad``; child
    modules are attributes that are ``Module`` instances or lists of them.
    Names are dotted attribute paths in definition order.
    """

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, val in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(val, Tensor) and val.requires_grad:
                yield name, val
            elif isinstance(val, Module):
                yield from val.named_parameters(name + ".")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")
                    elif isinstance(item, Tensor) and item.requires_grad:
                        yield f"{name}.{i}", item

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def cast(self) -> None:
        """Re-cast every parameter to the current global precision."""
        dtype = get_dtype()
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = None


def fan_in_std(spec: ConvSpec) -> float:
    _, cin_g, kh, kw = spec.weight_shape
    return 1.0 / math.sqrt(cin_g * kh * kw)


class Conv2d(Module):
    """Convolution layer; ``std=None`` selects fan-in scaled init (1/sqrt(fan_in))."""

    def __init__(self, spec: ConvSpec, rng: np.random.Generator, std: Optional[float] = 0.02):
        self.spec = spec
        std = fan_in_std(spec) if std is None else std
        self.weight = Parameter(trunc_normal(rng, spec.weight_shape, std))
        self.bias = Parameter(np.zeros(spec.out_channels))

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[1] != self.spec.in_channels:
            raise ConfigurationError(
                f"conv expects {self.spec.in_channels} input channels, got input shape {x.shape}")
        return ops.conv2d(x, self.weight, self.bias, self.spec.stride, self.spec.pad, self.spec.groups)


def conv1x1(cin: int, cout: int, rng: np.random.Generator, std: Optional[float] = 0.02) -> Conv2d:
    return Conv2d(ConvSpec(cin, cout), rng, std)


class ConvNeXtBlock(Module):
    """x + pw2(gelu(pw1(norm(dwconv7x7(x)))))."""

    def __init__(self, channels: int, rng: np.random.Generator, expansion: int = 4,
                 kernel: int = 7, residual_scale: float = 1.0):
        self.dwconv = Conv2d(ConvSpec(channels, channels, (kernel, kernel), 1, "same", groups=channels), rng)
        self.norm_weight = Parameter(np.ones(channels))
        self.norm_bias = Parameter(np.zeros(channels))
        self.pw1 = conv1x1(channels, expansion * channels, rng)
        self.pw2 = conv1x1(expansion * channels, channels, rng)
        self.pw2.weight.data *= residual_scale

    def __call__(self, x: Tensor) -> Tensor:
        h = self.dwconv(x)
        h = ops.channel_norm(h, self.norm_weight, self.norm_bias)
        h = ops.gelu(self.pw1(h))
        return x + self.pw2(h)


def convnext_block(x: Tensor, params: ConvNeXtBlock) -> Tensor:
    return params(x)


class Upsample(Module):
    """1x1 conv to ``cout * r^2`` channels, then pixel shuffle by ``r``.

    With ``r == 1`` this is a plain 1x1 channel projection (or identity when the
    widths already agree).
    """

    def __init__(self, cin: int, cout: int, r: int, rng: np.random.Generator, std: Optional[float] = 0.02):
        if r < 1:
            raise ConfigurationError(f"upsample ratio must be >= 1, got {r}")
        self.r = r
        self.proj = conv1x1(cin, cout * r * r, rng, std) if (r > 1 or cin != cout) else None

    def __call__(self, x: Tensor) -> Tensor:
        if self.proj is None:
            return x
        h = self.proj(x)
        return ops.pixel_shuffle(h, self.r) if self.r > 1 else h
