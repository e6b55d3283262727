"""Convolutional attention blocks for spectrogram feature maps.

Feature maps are ``C x H x T`` (channels, frequency bins, frames), optionally
with a leading batch axis. Four axis modules refine the output of channel
attention:

* ``spatial``: CBAM's 7x7 spatial gate over the whole H x T plane.
* ``f``: a 7x1 gate over frequency, computed from the time-averaged map and
  broadcast along time.
* ``t``: a 1x7 gate over time, computed from the frequency-averaged map and
  broadcast along frequency.
* ``ft``: ``f`` and ``t`` run in parallel on the same input and averaged.
  Averaging the two attended outputs and attending with the averaged maps
  are the same thing, since the gate multiplies elementwise; the latter is
  what is computed.

The ``f`` and ``t`` gates pool with order-free means and a tap-loop
convolution, so a frequency gate is bitwise unchanged when frames are
reordered (and a temporal gate when bins are).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import functional as F
from .errors import ContractError, DimensionError
from .nn import Module, he_normal, parameter
from .tensor import Tensor, add, as_tensor, clip, concat, matmul, mean, mul, relu, reshape, sigmoid, tmax

VARIANTS = ("none", "spatial", "f", "t", "ft")

FREQ_CONV = F.ConvSpec(kernel=(7, 1), in_channels=2, out_channels=1, padding=(3, 0))
TEMP_CONV = F.ConvSpec(kernel=(1, 7), in_channels=2, out_channels=1, padding=(0, 3))
SPATIAL_CONV = F.ConvSpec(kernel=(7, 7), in_channels=2, out_channels=1, padding=(3, 3))


def mlp_hidden(channels: int, reduction: int = 16) -> int:
    """Hidden width of the channel MLP; channels below ``reduction`` collapse to width 1."""
    r = reduction if channels >= reduction else channels
    return max(1, channels // r)


def _gate(logits: Tensor) -> Tensor:
    """Sigmoid held strictly inside (0, 1).

    Large logits round the plain sigmoid to exactly 0 or 1. Clamping to the
    nearest representable interior values keeps every gate open; the gradient
    at those points is already zero.
    """
    info = np.finfo(logits.data.dtype)
    return clip(sigmoid(logits), float(info.tiny), float(1.0 - info.epsneg))


def _as_batch(x: Tensor) -> tuple[Tensor, bool]:
    x = as_tensor(x)
    if x.ndim == 3:
        return reshape(x, (1,) + x.shape), True
    if x.ndim != 4:
        raise DimensionError(f"feature map must be C x H x T or N x C x H x T, got {x.shape}")
    return x, False


def _drop_batch(t: Tensor, squeezed: bool) -> Tensor:
    return reshape(t, t.shape[1:]) if squeezed else t


def channel_attention(fmap: Tensor, w1: Tensor, w2: Tensor) -> tuple[Tensor, Tensor]:
    """Gate channels by sigmoid(MLP(avgpool) + MLP(maxpool)); the MLP is shared."""
    x, squeezed = _as_batch(fmap)
    n, c = x.shape[:2]
    if w1.shape[0] != c or w2.shape[1] != c or w1.shape[1] != w2.shape[0]:
        raise DimensionError(f"channel MLP shapes {w1.shape}/{w2.shape} do not fit {c} channels")
    avg = mean(x, axis=(2, 3))
    mx = tmax(x, axis=(2, 3))
    logits = add(matmul(relu(matmul(avg, w1)), w2), matmul(relu(matmul(mx, w1)), w2))
    gate = _gate(logits)
    out = mul(x, reshape(gate, (n, c, 1, 1)))
    return _drop_batch(out, squeezed), _drop_batch(gate, squeezed)


def _channel_pooled_pair(x: Tensor, exact: bool = False) -> Tensor:
    return concat([mean(x, axis=1, keepdims=True, order_free=exact), tmax(x, axis=1, keepdims=True)],
                  axis=1)


def _check_kernel(kernel: Tensor, spec: F.ConvSpec, name: str) -> None:
    if tuple(kernel.shape) != spec.weight_shape:
        raise ContractError(f"{name} kernel must have shape {spec.weight_shape}, got {kernel.shape}")


def _freq_map(x: Tensor, kernel: Tensor) -> Tensor:
    _check_kernel(kernel, FREQ_CONV, "frequency")
    f_freq = mean(x, axis=3, keepdims=True, order_free=True)        # N x C x H x 1
    pooled = _channel_pooled_pair(f_freq, exact=True)                # N x 2 x H x 1
    return _gate(F.conv2d_direct(pooled, FREQ_CONV, kernel))       # N x 1 x H x 1


def _temp_map(x: Tensor, kernel: Tensor) -> Tensor:
    _check_kernel(kernel, TEMP_CONV, "temporal")
    f_temp = mean(x, axis=2, keepdims=True, order_free=True)        # N x C x 1 x T
    pooled = _channel_pooled_pair(f_temp, exact=True)                # N x 2 x 1 x T
    return _gate(F.conv2d_direct(pooled, TEMP_CONV, kernel))       # N x 1 x 1 x T


def _squeeze_map(m: Tensor, squeezed: bool) -> Tensor:
    n = m.shape[0]
    m = reshape(m, (n,) + m.shape[2:])
    return _drop_batch(m, squeezed)


def f_cbam(fmap: Tensor, kernel: Tensor) -> tuple[Tensor, Tensor]:
    """Frequency attention; returns the gated map and the H x 1 gate."""
    x, squeezed = _as_batch(fmap)
    m = _freq_map(x, kernel)
    return _drop_batch(mul(x, m), squeezed), _squeeze_map(m, squeezed)


def t_cbam(fmap: Tensor, kernel: Tensor) -> tuple[Tensor, Tensor]:
    """Temporal attention; returns the gated map and the 1 x T gate."""
    x, squeezed = _as_batch(fmap)
    m = _temp_map(x, kernel)
    return _drop_batch(mul(x, m), squeezed), _squeeze_map(m, squeezed)


def ft_cbam(fmap: Tensor, freq_kernel: Tensor, temp_kernel: Tensor) -> tuple[Tensor, Tensor, Tensor]:
    x, squeezed = _as_batch(fmap)
    mf = _freq_map(x, freq_kernel)
    mt = _temp_map(x, temp_kernel)
    gate = mul(add(mf, mt), 0.5)                          # broadcasts to N x 1 x H x T
    out = mul(x, gate)
    return (_drop_batch(out, squeezed), _squeeze_map(mf, squeezed), _squeeze_map(mt, squeezed))


def spatial_cbam(fmap: Tensor, kernel: Tensor) -> tuple[Tensor, Tensor]:
    x, squeezed = _as_batch(fmap)
    _check_kernel(kernel, SPATIAL_CONV, "spatial")
    m = _gate(F.conv2d(_channel_pooled_pair(x), SPATIAL_CONV, kernel))
    return _drop_batch(mul(x, m), squeezed), _squeeze_map(m, squeezed)


@dataclass
class CbamParams:
    mlp_w1: Tensor | None = None
    mlp_w2: Tensor | None = None
    freq_kernel: Tensor | None = None
    temp_kernel: Tensor | None = None
    spatial_kernel: Tensor | None = None


_REQUIRED = {
    "none": (),
    "spatial": ("mlp_w1", "mlp_w2", "spatial_kernel"),
    "f": ("mlp_w1", "mlp_w2", "freq_kernel"),
    "t": ("mlp_w1", "mlp_w2", "temp_kernel"),
    "ft": ("mlp_w1", "mlp_w2", "freq_kernel", "temp_kernel"),
}


def cbam_block(fmap: Tensor, variant: str, params: CbamParams | None, maps: dict | None = None) -> Tensor:
    """Channel attention followed by the selected axis module.

    ``variant="none"`` returns the input object untouched. When ``maps`` is a
    dict, the attention maps produced are stored into it by kind.
    """
    if variant not in _REQUIRED:
        raise ContractError(f"unknown attention variant {variant!r}")
    if variant == "none":
        return fmap
    present = {k for k in _REQUIRED["ft"] + ("spatial_kernel",)
               if params is not None and getattr(params, k) is not None}
    if set(_REQUIRED[variant]) != present:
        raise ContractError(f"variant {variant!r} needs exactly {_REQUIRED[variant]}, got {sorted(present)}")

    out, mc = channel_attention(fmap, params.mlp_w1, params.mlp_w2)
    if variant == "spatial":
        out, ms = spatial_cbam(out, params.spatial_kernel)
        found = {"channel": mc, "spatial": ms}
    elif variant == "f":
        out, mf = f_cbam(out, params.freq_kernel)
        found = {"channel": mc, "freq": mf}
    elif variant == "t":
        out, mt = t_cbam(out, params.temp_kernel)
        found = {"channel": mc, "temp": mt}
    else:
        out, mf, mt = ft_cbam(out, params.freq_kernel, params.temp_kernel)
        found = {"channel": mc, "freq": mf, "temp": mt}
    if maps is not None:
        maps.update(found)
    return out


def attention_param_count(channels: int, variant: str, reduction: int = 16) -> int:
    """Closed-form number of scalars an attention block adds for ``variant``."""
    if variant == "none":
        return 0
    hidden = mlp_hidden(channels, reduction)
    kernels = {"spatial": 2 * 49, "f": 2 * 7, "t": 2 * 7, "ft": 2 * 7 + 2 * 7}[variant]
    return 2 * channels * hidden + kernels


class CBAM(Module):
    """Per-block attention parameters for one variant."""

    def __init__(self, channels: int, variant: str, rng: np.random.Generator, reduction: int = 16):
        super().__init__()
        if variant not in VARIANTS:
            raise ContractError(f"unknown attention variant {variant!r}")
        self.variant = variant
        self.channels = channels
        self.last_maps: dict = {}
        self.record_maps = False
        if variant == "none":
            return
        hidden = mlp_hidden(channels, reduction)
        self.mlp_w1 = parameter(he_normal(rng, (channels, hidden), channels))
        self.mlp_w2 = parameter(he_normal(rng, (hidden, channels), hidden))
        if variant in ("f", "ft"):
            self.freq_kernel = parameter(he_normal(rng, FREQ_CONV.weight_shape, 14))
        if variant in ("t", "ft"):
            self.temp_kernel = parameter(he_normal(rng, TEMP_CONV.weight_shape, 14))
        if variant == "spatial":
            self.spatial_kernel = parameter(he_normal(rng, SPATIAL_CONV.weight_shape, 98))

    @property
    def params(self) -> CbamParams:
        return CbamParams(**{k: getattr(self, k, None) for k in
                             ("mlp_w1", "mlp_w2", "freq_kernel", "temp_kernel", "spatial_kernel")})

    def forward(self, x: Tensor) -> Tensor:
        maps = {} if self.record_maps else None
        out = cbam_block(x, self.variant, self.params, maps)
        if maps is not None:
            self.last_maps = {k: np.array(v.data) for k, v in maps.items()}
        return out
