"""Differentiable operations over :class:`Tensor`.

Only the op set the codec needs: broadcasting arithmetic, reductions, channel
concat/slice, strided and depthwise convolution, pixel shuffle, channel
normalization, tanh-GELU, softplus, clamp and straight-through rounding.
"""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ConfigurationError
from . import _backend
from .tensor import Tensor, as_tensor, record


def _data(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x)


def unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def round_half_away(x: np.ndarray) -> np.ndarray:
    """Nearest-integer rounding with ties away from zero."""
    return np.copysign(np.floor(np.abs(x) + 0.5), x)


# -- arithmetic ---------------------------------------------------------------

def add(a, b) -> Tensor:
    a_, b_ = _data(a), _data(b)
    sa, sb = a_.shape, b_.shape
    return record(a_ + b_, (a, b), lambda g: (unbroadcast(g, sa), unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a_, b_ = _data(a), _data(b)
    sa, sb = a_.shape, b_.shape
    return record(a_ - b_, (a, b), lambda g: (unbroadcast(g, sa), unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a_, b_ = _data(a), _data(b)

    def grad_fn(g):
        return unbroadcast(g * b_, a_.shape), unbroadcast(g * a_, b_.shape)

    return record(a_ * b_, (a, b), grad_fn)


def scale(a: Tensor, c: float) -> Tensor:
    return record(_data(a) * c, (a,), lambda g: (g * c,))


def expand(a: Tensor, shape: tuple) -> Tensor:
    """Broadcast ``a`` to ``shape`` as a real (copied) tensor."""
    a_ = _data(a)
    out = np.array(np.broadcast_to(a_, shape))
    return record(out, (a,), lambda g: (unbroadcast(g, a_.shape),))


def sum(a: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    a_ = _data(a)
    return record(np.asarray(a_.sum(), dtype=a_.dtype), (a,), lambda g: (np.full(a_.shape, g, dtype=a_.dtype),))


def mean(a: Tensor) -> Tensor:
    a_ = _data(a)
    n = a_.size
    return record(np.asarray(a_.mean(), dtype=a_.dtype), (a,),
                  lambda g: (np.full(a_.shape, g / n, dtype=a_.dtype),))


def mse(a, b) -> Tensor:
    a_, b_ = _data(a), _data(b)
    if a_.shape != b_.shape:
        raise ConfigurationError(f"mse shape mismatch: {a_.shape} vs {b_.shape}")
    diff = a_ - b_
    n = diff.size

    def grad_fn(g):
        d = (2.0 / n) * g * diff
        return d, -d

    return record(np.asarray(np.mean(diff * diff), dtype=a_.dtype), (a, b), grad_fn)


# -- shape ops ----------------------------------------------------------------

def concat(tensors: Sequence, axis: int = 1) -> Tensor:
    arrays = [_data(t) for t in tensors]
    bounds = np.cumsum([0] + [a.shape[axis] for a in arrays])

    def grad_fn(g):
        out = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            out.append(g[tuple(idx)])
        return out

    return record(np.concatenate(arrays, axis=axis), tuple(tensors), grad_fn)


def slice_channels(a: Tensor, start: int, stop: int) -> Tensor:
    a_ = _data(a)

    def grad_fn(g):
        full = np.zeros_like(a_)
        full[:, start:stop] = g
        return (full,)

    return record(a_[:, start:stop].copy(), (a,), grad_fn)


def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    """(N, C*r*r, H, W) -> (N, C, H*r, W*r)."""
    x_ = _data(x)
    n, c, h, w = x_.shape
    if r < 1 or c % (r * r):
        raise ConfigurationError(f"pixel_shuffle: channels {c} not divisible by r^2={r * r}")
    co = c // (r * r)
    out = x_.reshape(n, co, r, r, h, w).transpose(0, 1, 4, 2, 5, 3).reshape(n, co, h * r, w * r)

    def grad_fn(g):
        return (g.reshape(n, co, h, r, w, r).transpose(0, 1, 3, 5, 2, 4).reshape(n, c, h, w),)

    return record(out, (x,), grad_fn)


def pixel_unshuffle(x: Tensor, r: int) -> Tensor:
    """Inverse of :func:`pixel_shuffle`."""
    x_ = _data(x)
    n, c, h, w = x_.shape
    if r < 1 or h % r or w % r:
        raise ConfigurationError(f"pixel_unshuffle: spatial dims {(h, w)} not divisible by {r}")
    ho, wo = h // r, w // r
    out = x_.reshape(n, c, ho, r, wo, r).transpose(0, 1, 3, 5, 2, 4).reshape(n, c * r * r, ho, wo)

    def grad_fn(g):
        return (g.reshape(n, c, r, r, ho, wo).transpose(0, 1, 4, 2, 5, 3).reshape(n, c, h, w),)

    return record(out, (x,), grad_fn)


# -- convolution --------------------------------------------------------------

def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    span = size + 2 * padding - kernel
    if span < 0:
        raise ConfigurationError(f"conv: input extent {size} (+2*{padding} pad) smaller than kernel {kernel}")
    return span // stride + 1


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1,
           padding: int = 0, groups: int = 1) -> Tensor:
    """2-D cross-correlation on NCHW input.

    Supports dense convolution (``groups=1``) and depthwise convolution
    (``groups == in_channels == out_channels``).
    """
    x_, w_ = _data(x), _data(weight)
    if x_.ndim != 4:
        raise ConfigurationError(f"conv2d expects NCHW input, got shape {x_.shape}")
    n, c, h, w = x_.shape
    o, cg, kh, kw = w_.shape
    if stride < 1:
        raise ConfigurationError(f"conv2d stride must be >= 1, got {stride}")
    if c != cg * groups:
        raise ConfigurationError(
            f"conv2d weight expects {cg * groups} input channels (shape {w_.shape}, groups={groups}), "
            f"input has shape {x_.shape}")
    if groups != 1 and not (groups == c == o and cg == 1):
        raise ConfigurationError(f"conv2d supports groups=1 or depthwise only, got groups={groups}")
    if bias is not None and _data(bias).shape != (o,):
        raise ConfigurationError(f"conv2d bias expected shape {(o,)}, got {_data(bias).shape}")
    ho = conv_output_size(h, kh, stride, padding)
    wo = conv_output_size(w, kw, stride, padding)
    xp = np.pad(x_, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x_

    if groups == 1:
        out, grad_fn = _dense_conv(xp, w_, stride, ho, wo)
    else:
        out, grad_fn = _depthwise_conv(xp, w_, stride, ho, wo)

    if bias is not None:
        out += _data(bias)[None, :, None, None]

    def full_grad(g):
        gxp, gw = grad_fn(g)
        gx = gxp[:, :, padding:padding + h, padding:padding + w] if padding else gxp
        gb = g.sum(axis=(0, 2, 3)) if bias is not None else None
        return gx, gw, gb

    return record(out, (x, weight, bias), full_grad)


def _dense_conv(xp, w_, s, ho, wo):
    n, c, hp, wp = xp.shape
    o, _, kh, kw = w_.shape
    if kh == kw == 1 and s == 1:
        xr = xp.reshape(n, c, hp * wp)
        w2 = w_.reshape(o, c)
        out = np.matmul(w2, xr).reshape(n, o, ho, wo)

        def grad_fn(g):
            gr = g.reshape(n, o, ho * wo)
            gx = np.matmul(w2.T, gr).reshape(xp.shape)
            gw = np.tensordot(gr, xr, axes=([0, 2], [0, 2])).reshape(w_.shape)
            return gx, gw

        return out, grad_fn

    if kh == s and kw == s and hp == ho * s and wp == wo * s:
        # non-overlapping patches: a reshape is the im2col
        cols = xp.reshape(n, c, ho, kh, wo, kw).transpose(0, 2, 4, 1, 3, 5)
    else:
        cols = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::s, ::s][:, :, :ho, :wo]
        cols = cols.transpose(0, 2, 3, 1, 4, 5)
    cols = np.ascontiguousarray(cols)  # (N, Ho, Wo, C, kh, kw)
    out = np.tensordot(cols, w_, axes=([3, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    out = np.ascontiguousarray(out)

    def grad_fn(g):
        gw = np.tensordot(g, cols, axes=([0, 2, 3], [0, 1, 2]))
        gcols = np.tensordot(g, w_, axes=([1], [0]))  # (N, Ho, Wo, C, kh, kw)
        gxp = np.zeros(xp.shape, dtype=xp.dtype)
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i:i + s * (ho - 1) + 1:s, j:j + s * (wo - 1) + 1:s] += \
                    gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        return gxp, gw

    return out, grad_fn


def _depthwise_conv(xp, w_, s, ho, wo):
    kernels = _backend.kernels
    if kernels is not None and s == 1:
        return _depthwise_conv_compiled(kernels, xp, w_, ho, wo)
    return _depthwise_conv_numpy(xp, w_, s, ho, wo)


def _depthwise_conv_compiled(kernels, xp, w_, ho, wo):
    n, c, _, _ = xp.shape
    _, _, kh, kw = w_.shape
    xp = np.ascontiguousarray(xp)
    taps = np.ascontiguousarray(w_.reshape(c, kh * kw))
    out = np.empty((n, c, ho, wo), dtype=xp.dtype)
    kernels.depthwise_forward(xp, taps, out, kh, kw)

    def grad_fn(g):
        gxp = np.zeros_like(xp)
        gtaps = np.empty_like(taps)
        kernels.depthwise_backward(xp, taps, np.ascontiguousarray(g, dtype=xp.dtype), gxp, gtaps, kh, kw)
        return gxp, gtaps.reshape(w_.shape)

    return out, grad_fn


def _depthwise_conv_numpy(xp, w_, s, ho, wo):
    n, c, _, _ = xp.shape
    _, _, kh, kw = w_.shape
    out = np.zeros((n, c, ho, wo), dtype=xp.dtype)
    taps = w_[:, 0]
    for i in range(kh):
        for j in range(kw):
            out += xp[:, :, i:i + s * (ho - 1) + 1:s, j:j + s * (wo - 1) + 1:s] * taps[None, :, i, j, None, None]

    def grad_fn(g):
        gw = np.zeros_like(w_)
        gxp = np.zeros(xp.shape, dtype=xp.dtype)
        for i in range(kh):
            for j in range(kw):
                win = xp[:, :, i:i + s * (ho - 1) + 1:s, j:j + s * (wo - 1) + 1:s]
                gw[:, 0, i, j] = np.einsum("nchw,nchw->c", g, win)
                gxp[:, :, i:i + s * (ho - 1) + 1:s, j:j + s * (wo - 1) + 1:s] += g * taps[None, :, i, j, None, None]
        return gxp, gw

    return out, grad_fn


# -- pointwise nonlinearities -------------------------------------------------

_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x: Tensor) -> Tensor:
    """tanh-approximated GELU (fixed, so both coder ends agree bit-exactly)."""
    x_ = _data(x)
    inner = _GELU_C * (x_ + 0.044715 * (x_ * x_ * x_))
    t = np.tanh(inner)
    out = 0.5 * x_ * (1.0 + t)

    def grad_fn(g):
        d_inner = _GELU_C * (1.0 + 3 * 0.044715 * x_ * x_)
        return (g * (0.5 * (1.0 + t) + 0.5 * x_ * (1.0 - t * t) * d_inner),)

    return record(out, (x,), grad_fn)


def softplus(x: Tensor) -> Tensor:
    x_ = _data(x)
    out = np.logaddexp(0.0, x_).astype(x_.dtype)

    def grad_fn(g):
        return (g / (1.0 + np.exp(-x_)),)

    return record(out, (x,), grad_fn)


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    x_ = _data(x)
    out = np.clip(x_, lo, hi)
    inside = (x_ >= lo) & (x_ <= hi)
    return record(out, (x,), lambda g: (g * inside,))


def ste_round(x: Tensor) -> Tensor:
    """Forward: round half away from zero. Backward: identity."""
    return record(round_half_away(_data(x)), (x,), lambda g: (g,))


def add_noise(x: Tensor, noise: np.ndarray) -> Tensor:
    """x + constant noise; gradient passes unchanged."""
    x_ = _data(x)
    if noise.shape != x_.shape:
        raise ConfigurationError(f"noise shape {noise.shape} != tensor shape {x_.shape}")
    return record(x_ + noise.astype(x_.dtype), (x,), lambda g: (g,))


# -- normalization ------------------------------------------------------------

def channel_norm(x: Tensor, weight: Tensor, bias: Tensor, eps: float = 1e-6) -> Tensor:
    """LayerNorm over the channel axis of an NCHW tensor, per spatial position."""
    x_, w_, b_ = _data(x), _data(weight), _data(bias)
    c = x_.shape[1]
    mu = x_.mean(axis=1, keepdims=True)
    xc = x_ - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    wb = w_[None, :, None, None]
    out = xhat * wb + b_[None, :, None, None]

    def grad_fn(g):
        gw = np.einsum("nchw,nchw->c", g, xhat)
        gb = g.sum(axis=(0, 2, 3))
        gxhat = g * wb
        gx = inv * (gxhat - gxhat.mean(axis=1, keepdims=True)
                    - xhat * (gxhat * xhat).sum(axis=1, keepdims=True) / c)
        return gx, gw, gb

    return record(out, (x, weight, bias), grad_fn)


def reflect_pad_to_multiple(x: np.ndarray, multiple: int) -> np.ndarray:
    """Reflect-pad the bottom/right of an NCHW array to a multiple of ``multiple``."""
    h, w = x.shape[-2:]
    ph, pw = (-h) % multiple, (-w) % multiple
    if not ph and not pw:
        return x
    mode = "reflect" if ph < h and pw < w else "symmetric"
    return np.pad(x, ((0, 0), (0, 0), (0, ph), (0, pw)), mode=mode)


__all__ = [
    "add", "sub", "mul", "scale", "expand", "sum", "mean", "mse", "concat", "slice_channels",
    "pixel_shuffle", "pixel_unshuffle", "conv2d", "conv_output_size", "gelu", "softplus", "clamp",
    "ste_round", "add_noise", "channel_norm", "round_half_away", "reflect_pad_to_multiple",
    "unbroadcast", "as_tensor",
]
