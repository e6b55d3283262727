"""Neural-network primitives on top of :mod:`ftcbam.tensor`.

Image-like inputs are laid out ``N x C x H x W``. Unbatched ``C x H x W``
inputs are accepted by the convolution and pooling ops and returned unbatched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractError, DimensionError, GeometryError, NumericError
from .tensor import Tensor, _make, as_tensor, div, sqrt, tsum, mul, add, matmul


def _pair(v) -> tuple[int, int]:
    if isinstance(v, int):
        return (v, v)
    a, b = v
    return (int(a), int(b))


def out_extent(size: int, kernel: int, stride: int, pad: int) -> int:
    n = (size + 2 * pad - kernel) // stride + 1
    if size + 2 * pad < kernel or n < 1:
        raise GeometryError(
            f"kernel {kernel} does not fit input extent {size} with padding {pad}")
    return n


@dataclass(frozen=True)
class ConvSpec:
    kernel: tuple[int, int]
    in_channels: int
    out_channels: int
    stride: tuple[int, int] = (1, 1)
    padding: tuple[int, int] = (0, 0)
    bias: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kernel", _pair(self.kernel))
        object.__setattr__(self, "stride", _pair(self.stride))
        object.__setattr__(self, "padding", _pair(self.padding))
        if min(self.kernel) < 1 or min(self.stride) < 1 or min(self.padding) < 0:
            raise GeometryError(f"invalid conv geometry {self}")
        if self.in_channels < 1 or self.out_channels < 1:
            raise DimensionError("channel counts must be positive")

    @property
    def weight_shape(self) -> tuple[int, int, int, int]:
        return (self.out_channels, self.in_channels) + self.kernel

    def output_hw(self, h: int, w: int) -> tuple[int, int]:
        return (out_extent(h, self.kernel[0], self.stride[0], self.padding[0]),
                out_extent(w, self.kernel[1], self.stride[1], self.padding[1]))

    def param_count(self) -> int:
        return int(np.prod(self.weight_shape)) + (self.out_channels if self.bias else 0)


def _batched(x: Tensor):
    if x.ndim == 3:
        from .tensor import reshape
        return reshape(x, (1,) + x.shape), True
    if x.ndim != 4:
        raise DimensionError(f"expected C x H x W or N x C x H x W input, got shape {x.shape}")
    return x, False


def _unbatch(y: Tensor, squeezed: bool) -> Tensor:
    if squeezed:
        from .tensor import reshape
        return reshape(y, y.shape[1:])
    return y


def _pad(a: np.ndarray, ph: int, pw: int) -> np.ndarray:
    if ph == 0 and pw == 0:
        return a
    return np.pad(a, ((0, 0), (0, 0), (ph, ph), (pw, pw)))


def conv2d(x: Tensor, spec: ConvSpec, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """2-D cross-correlation following ``spec``; differentiable w.r.t. input, weight and bias."""
    x = as_tensor(x)
    if tuple(weight.shape) != spec.weight_shape:
        raise DimensionError(f"weight shape {weight.shape} does not match {spec.weight_shape}")
    if spec.bias and (bias is None or bias.shape != (spec.out_channels,)):
        raise DimensionError("spec requires a bias of length out_channels")
    xb, squeezed = _batched(x)
    n, c, h, w = xb.shape
    if c != spec.in_channels:
        raise DimensionError(f"input has {c} channels, spec expects {spec.in_channels}")
    ho, wo = spec.output_hw(h, w)
    kh, kw = spec.kernel
    sh, sw = spec.stride
    ph, pw = spec.padding
    cout = spec.out_channels
    w2d = weight.data.reshape(cout, -1)

    if (kh, kw, sh, sw, ph, pw) == (1, 1, 1, 1, 0, 0):
        cols = xb.data.transpose(0, 2, 3, 1).reshape(-1, c)
    else:
        xp = _pad(xb.data, ph, pw)
        win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw][:, :, :ho, :wo]
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
    out = (cols @ w2d.T).reshape(n, ho, wo, cout).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data.reshape(1, cout, 1, 1)
    out = np.ascontiguousarray(out)

    parents = (xb, weight) if bias is None else (xb, weight, bias)

    def backward(g):
        g2d = g.transpose(0, 2, 3, 1).reshape(-1, cout)
        gw = (g2d.T @ cols).reshape(weight.shape) if weight.requires_grad else None
        gx = None
        if xb.requires_grad:
            dcols = g2d @ w2d
            if (kh, kw, sh, sw, ph, pw) == (1, 1, 1, 1, 0, 0):
                gx = dcols.reshape(n, h, w, c).transpose(0, 3, 1, 2)
            else:
                dcols = dcols.reshape(n, ho, wo, c, kh, kw)
                gxp = np.zeros((n, c, h + 2 * ph, w + 2 * pw), dtype=g.dtype)
                for i in range(kh):
                    for j in range(kw):
                        gxp[:, :, i:i + sh * ho:sh, j:j + sw * wo:sw] += \
                            dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
                gx = gxp[:, :, ph:ph + h, pw:pw + w]
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return tuple(grads)

    return _unbatch(_make(out, parents, backward), squeezed)


def conv2d_direct(x: Tensor, spec: ConvSpec, weight: Tensor) -> Tensor:
    """Stride-1, bias-free cross-correlation as a loop of scaled shifted copies.

    Every output value is accumulated tap by tap with elementwise IEEE
    operations, so identical inputs give identical outputs regardless of
    memory layout. Meant for the few-channel attention kernels, where that
    matters more than speed.
    """
    x = as_tensor(x)
    if tuple(weight.shape) != spec.weight_shape:
        raise DimensionError(f"weight shape {weight.shape} does not match {spec.weight_shape}")
    if spec.stride != (1, 1) or spec.bias:
        raise ContractError("conv2d_direct supports stride 1 without bias only")
    xb, squeezed = _batched(x)
    n, c, h, w = xb.shape
    if c != spec.in_channels:
        raise DimensionError(f"input has {c} channels, spec expects {spec.in_channels}")
    ho, wo = spec.output_hw(h, w)
    kh, kw = spec.kernel
    ph, pw = spec.padding
    xp = _pad(xb.data, ph, pw)
    wd = weight.data
    taps = [(o, ci, i, j) for o in range(spec.out_channels) for ci in range(c)
            for i in range(kh) for j in range(kw)]
    out = np.zeros((n, spec.out_channels, ho, wo), dtype=xp.dtype)
    for o, ci, i, j in taps:
        out[:, o] += wd[o, ci, i, j] * xp[:, ci, i:i + ho, j:j + wo]

    def backward(g):
        gxp = np.zeros_like(xp)
        gw = np.zeros_like(wd)
        for o, ci, i, j in taps:
            gxp[:, ci, i:i + ho, j:j + wo] += wd[o, ci, i, j] * g[:, o]
            gw[o, ci, i, j] = np.sum(g[:, o] * xp[:, ci, i:i + ho, j:j + wo])
        return gxp[:, :, ph:ph + h, pw:pw + w], gw

    return _unbatch(_make(out, (xb, weight), backward), squeezed)


def avg_pool(x: Tensor, kernel, stride=None, padding=(0, 0)) -> Tensor:
    """Mean over each window; zero padding counts toward the window size."""
    x = as_tensor(x)
    kh, kw = _pair(kernel)
    sh, sw = _pair(stride if stride is not None else kernel)
    ph, pw = _pair(padding)
    xb, squeezed = _batched(x)
    n, c, h, w = xb.shape
    ho, wo = out_extent(h, kh, sh, ph), out_extent(w, kw, sw, pw)
    xp = _pad(xb.data, ph, pw)
    out = np.zeros((n, c, ho, wo), dtype=xb.data.dtype)
    for i in range(kh):
        for j in range(kw):
            out += xp[:, :, i:i + sh * ho:sh, j:j + sw * wo:sw][:, :, :ho, :wo]
    out /= kh * kw

    def backward(g):
        gxp = np.zeros(xp.shape, dtype=g.dtype)
        share = g / (kh * kw)
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i:i + sh * ho:sh, j:j + sw * wo:sw] += share
        return (gxp[:, :, ph:ph + h, pw:pw + w],)

    return _unbatch(_make(out, (xb,), backward), squeezed)


def max_pool(x: Tensor, kernel, stride=None, padding=(0, 0)) -> Tensor:
    """Max over each window; backward routes to the first maximal cell in row-major order."""
    x = as_tensor(x)
    kh, kw = _pair(kernel)
    sh, sw = _pair(stride if stride is not None else kernel)
    ph, pw = _pair(padding)
    xb, squeezed = _batched(x)
    n, c, h, w = xb.shape
    ho, wo = out_extent(h, kh, sh, ph), out_extent(w, kw, sw, pw)
    xp = np.pad(xb.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)), constant_values=-np.inf) \
        if (ph or pw) else xb.data
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw][:, :, :ho, :wo]
    flat = win.reshape(n, c, ho, wo, kh * kw)
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]

    def backward(g):
        gxp = np.zeros(xp.shape, dtype=g.dtype)
        for i in range(kh):
            for j in range(kw):
                hit = arg == i * kw + j
                if hit.any():
                    gxp[:, :, i:i + sh * ho:sh, j:j + sw * wo:sw] += g * hit
        return (gxp[:, :, ph:ph + h, pw:pw + w],)

    return _unbatch(_make(np.ascontiguousarray(out), (xb,), backward), squeezed)


class RunningStats:
    """Per-channel running mean/variance used by batch norm in eval mode."""

    def __init__(self, channels: int, dtype=np.float64):
        self.mean = np.zeros(channels, dtype=dtype)
        self.var = np.ones(channels, dtype=dtype)


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, running: RunningStats | None,
               training: bool, momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Batch normalization over every axis except the channel axis (axis 1)."""
    x = as_tensor(x)
    if x.ndim < 2:
        raise DimensionError("batch_norm expects at least N x C input")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise DimensionError(f"gamma/beta must have length {c}")
    axes = (0,) + tuple(range(2, x.ndim))
    bshape = (1, c) + (1,) * (x.ndim - 2)
    if training:
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        if running is not None:
            m = x.data.size // c
            unbiased = var * m / (m - 1) if m > 1 else var
            running.mean *= 1 - momentum
            running.mean += momentum * mu
            running.var *= 1 - momentum
            running.var += momentum * unbiased
    else:
        if running is None:
            raise ContractError("eval-mode batch_norm needs running statistics")
        mu, var = running.mean, running.var
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu.reshape(bshape)) * inv.reshape(bshape)
    out = xhat * gamma.data.reshape(bshape) + beta.data.reshape(bshape)
    m = x.data.size // c

    def backward(g):
        gg = (g * xhat).sum(axis=axes)
        gb = g.sum(axis=axes)
        gx = None
        if x.requires_grad:
            scale = (gamma.data * inv).reshape(bshape)
            if training:
                gx = scale * (g - gb.reshape(bshape) / m - xhat * gg.reshape(bshape) / m)
            else:
                gx = scale * g
        return gx, gg, gb

    return _make(out.astype(x.data.dtype, copy=False), (x, gamma, beta), backward)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map ``x @ weight + bias`` with ``weight`` shaped (in, out)."""
    x = as_tensor(x)
    if x.shape[-1] != weight.shape[0]:
        raise DimensionError(f"linear: input width {x.shape[-1]} != weight rows {weight.shape[0]}")
    y = matmul(x, weight)
    if bias is not None:
        if bias.shape != (weight.shape[1],):
            raise DimensionError("linear: bias length must equal output width")
        y = add(y, bias)
    return y


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    soft = np.exp(out)

    def backward(g):
        return (g - soft * g.sum(axis=axis, keepdims=True),)

    return _make(out, (x,), backward)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (x,), backward)


def cross_entropy(logits: Tensor, target) -> Tensor:
    """Mean softmax cross-entropy of ``N x S`` logits against integer targets."""
    target = np.atleast_1d(np.asarray(target, dtype=np.int64))
    if logits.ndim == 1:
        from .tensor import reshape
        logits = reshape(logits, (1,) + logits.shape)
    n, s = logits.shape
    if target.shape != (n,) or target.min() < 0 or target.max() >= s:
        raise ContractError(f"targets must be {n} class indices in [0, {s})")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -logp[np.arange(n), target].mean()

    def backward(g):
        grad = np.exp(logp)
        grad[np.arange(n), target] -= 1.0
        return (grad * (g / n),)

    return _make(np.asarray(loss, dtype=logits.data.dtype), (logits,), backward)


def l2_normalize(x: Tensor, axis: int = -1, eps: float = 1e-12) -> Tensor:
    """Divide by the L2 norm along ``axis``; ``eps`` keeps all-zero slices finite."""
    norm = sqrt(add(tsum(mul(x, x), axis=axis, keepdims=True), eps * eps))
    return div(x, norm)


def safe_l2_normalize(x: Tensor, axis: int = -1, eps: float = 1e-12) -> Tensor:
    """Like :func:`l2_normalize` but refuses vectors whose norm is below ``eps``."""
    norms = np.sqrt((x.data * x.data).sum(axis=axis))
    if np.any(norms < eps):
        raise NumericError("cannot normalize a zero-norm vector")
    return l2_normalize(x, axis=axis, eps=0.0)
