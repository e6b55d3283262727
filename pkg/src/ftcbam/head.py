"""Embedding projection and additive-angular-margin (ArcSoftmax) classification."""

from __future__ import annotations

import math

import numpy as np

from . import functional as F
from .errors import ContractError, DimensionError
from .nn import Linear, Module, parameter
from .tensor import Tensor, _make, as_tensor, matmul, mul, reshape, where


class Embedding(Linear):
    """Affine projection to the embedding space; no activation."""

    def __init__(self, in_features: int, rng: np.random.Generator, dim: int = 256):
        super().__init__(in_features, dim, rng, bias=True)

    def forward(self, x):
        x = as_tensor(x)
        if x.shape[-1] != self.weight.shape[0]:
            raise DimensionError(f"embedding expects width {self.weight.shape[0]}, got {x.shape[-1]}")
        return super().forward(x)


def embed(agg: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    return F.linear(agg, weight, bias)


def _margin_cos(cos: Tensor, margin: float) -> Tensor:
    """cos(theta + m) from cos(theta), with the wrap-around guard past theta = pi - m."""
    c = cos.data
    sin = np.sqrt(np.clip(1.0 - c * c, 0.0, 1.0))
    cm, sm = math.cos(margin), math.sin(margin)
    guard = c > math.cos(math.pi - margin)
    out = np.where(guard, c * cm - sin * sm, c - margin * sm)

    def backward(g):
        # d/dc of c*cos m - sqrt(1-c^2)*sin m; sin floored so theta = 0 stays finite
        dphi = cm + c * sm / np.maximum(sin, 1e-6)
        return (g * np.where(guard, dphi, 1.0),)

    return _make(out.astype(c.dtype, copy=False), (cos,), backward)


def cosine_logits(e: Tensor, weight: Tensor) -> Tensor:
    """cos(theta_j) between normalized embeddings and normalized class columns."""
    e = as_tensor(e)
    squeezed = e.ndim == 1
    if squeezed:
        e = reshape(e, (1,) + e.shape)
    if e.shape[-1] != weight.shape[0]:
        raise DimensionError(f"embedding width {e.shape[-1]} != class weight rows {weight.shape[0]}")
    cos = matmul(F.safe_l2_normalize(e, axis=-1), F.l2_normalize(weight, axis=0))
    return reshape(cos, cos.shape[1:]) if squeezed else cos


def arc_logits(e: Tensor, weight: Tensor, scale: float = 30.0, margin: float = 0.2,
               target=None) -> Tensor:
    """Scaled cosine logits; the target class gets ``s*cos(theta + m)`` when ``target`` is given."""
    if scale <= 0:
        raise ContractError("scale must be positive")
    if not 0 <= margin < math.pi / 2:
        raise ContractError("margin must lie in [0, pi/2)")
    cos = cosine_logits(e, weight)
    if target is None:
        return mul(cos, scale)
    target = np.asarray(target, dtype=np.int64)
    n_classes = weight.shape[1]
    if np.any(target < 0) or np.any(target >= n_classes):
        raise ContractError(f"target outside [0, {n_classes})")
    onehot = np.zeros(cos.shape, dtype=bool)
    if cos.ndim == 1:
        onehot[int(target)] = True
    else:
        if target.shape != (cos.shape[0],):
            raise DimensionError("need one target per embedding")
        onehot[np.arange(cos.shape[0]), target] = True
    return mul(where(onehot, _margin_cos(cos, margin), cos), scale)


def arc_loss(logits: Tensor, target) -> Tensor:
    return F.cross_entropy(logits, target)


class ArcHead(Module):
    def __init__(self, dim: int, n_classes: int, rng: np.random.Generator,
                 scale: float = 30.0, margin: float = 0.2):
        super().__init__()
        self.weight = parameter(rng.standard_normal((dim, n_classes)) * math.sqrt(2.0 / (dim + n_classes)))
        self.scale = scale
        self.margin = margin

    def forward(self, e: Tensor, target=None, margin: float | None = None) -> Tensor:
        m = self.margin if margin is None else margin
        return arc_logits(e, self.weight, self.scale, m, target)
