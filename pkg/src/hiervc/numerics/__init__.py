"""Deterministic numpy tensor engine with reverse-mode differentiation."""
from . import ops
from .nn import Conv2d, ConvNeXtBlock, ConvSpec, Module, Parameter, Upsample, conv1x1, convnext_block, trunc_normal
from .ops import conv2d, pixel_shuffle, pixel_unshuffle
from .tensor import (
    Tensor,
    as_tensor,
    backward,
    get_dtype,
    is_grad_enabled,
    no_grad,
    precision,
    precision_bits,
    set_precision,
)

__all__ = [
    "ops", "Conv2d", "ConvNeXtBlock", "ConvSpec", "Module", "Parameter", "Upsample", "conv1x1",
    "convnext_block", "trunc_normal", "conv2d", "pixel_shuffle", "pixel_unshuffle", "Tensor",
    "as_tensor", "backward", "get_dtype", "is_grad_enabled", "no_grad", "precision",
    "precision_bits", "set_precision",
]
