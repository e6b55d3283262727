"""Utterance-level aggregation of frame descriptors: temporal average pooling and GhostVLAD."""

from __future__ import annotations

import numpy as np

from . import functional as F
from .errors import ContractError, DimensionError
from .nn import Module, parameter
from .tensor import Tensor, add, as_tensor, getitem, matmul, mean, mul, reshape, sub, transpose, tsum


def _frames_batch(frames: Tensor) -> tuple[Tensor, bool]:
    frames = as_tensor(frames)
    if frames.ndim == 2:
        return reshape(frames, (1,) + frames.shape), True
    if frames.ndim != 3:
        raise DimensionError(f"frames must be D x N or B x D x N, got {frames.shape}")
    return frames, False


def tap(frames: Tensor) -> Tensor:
    """Mean over the frame axis of a ``D x N`` (or ``B x D x N``) array."""
    frames = as_tensor(frames)
    if frames.shape[-1] < 1:
        raise ContractError("tap needs at least one frame")
    return mean(frames, axis=-1)


def ghost_vlad(frames: Tensor, centroids: Tensor, assign_w: Tensor, assign_b: Tensor,
               real_clusters: int, normalize: bool = True) -> Tensor:
    """Soft-assignment VLAD over K real + G ghost clusters, keeping only the K real residuals.

    ``centroids`` is ``(K+G) x D``; ``assign_w`` is ``D x (K+G)``. With
    ``normalize`` the per-cluster residual sums are L2-normalized, concatenated
    and L2-normalized again; without it the raw ``K*D`` sums are returned.
    """
    x, squeezed = _frames_batch(frames)
    b, d, n = x.shape
    k_all = centroids.shape[0]
    k = real_clusters
    if centroids.shape != (k_all, d) or assign_w.shape != (d, k_all) or assign_b.shape != (k_all,):
        raise DimensionError("VLAD parameter shapes do not match the frame dimension")
    if not 1 <= k <= k_all:
        raise ContractError(f"real cluster count {k} outside 1..{k_all}")

    xt = transpose(x, (0, 2, 1))                                   # B x N x D
    assign = F.softmax(add(matmul(xt, assign_w), assign_b), axis=-1)  # B x N x (K+G)
    real = getitem(assign, (slice(None), slice(None), slice(0, k)))   # B x N x K
    weighted = matmul(transpose(real, (0, 2, 1)), xt)               # B x K x D
    mass = reshape(tsum(real, axis=1), (b, k, 1))                   # B x K x 1
    resid = sub(weighted, mul(mass, getitem(centroids, slice(0, k))))
    if normalize:
        resid = F.l2_normalize(resid, axis=-1)
    out = reshape(resid, (b, k * d))
    if normalize:
        out = F.l2_normalize(out, axis=-1)
    return reshape(out, (k * d,)) if squeezed else out


class GhostVLAD(Module):
    def __init__(self, dim: int, clusters: int, ghost_clusters: int, rng: np.random.Generator):
        super().__init__()
        if clusters < 1 or ghost_clusters < 0:
            raise ContractError("need K >= 1 real clusters and G >= 0 ghost clusters")
        self.dim = dim
        self.clusters = clusters
        self.ghost_clusters = ghost_clusters
        total = clusters + ghost_clusters
        self.centroids = parameter(rng.standard_normal((total, dim)) * 0.1)
        self.assign_w = parameter(rng.standard_normal((dim, total)) / np.sqrt(dim))
        self.assign_b = parameter(np.zeros(total))

    @property
    def out_dim(self) -> int:
        return self.clusters * self.dim

    def forward(self, frames: Tensor) -> Tensor:
        return ghost_vlad(frames, self.centroids, self.assign_w, self.assign_b, self.clusters)


class TemporalAveragePool(Module):
    def __init__(self, dim: int):
        super().__init__()
        self.dim = dim

    @property
    def out_dim(self) -> int:
        return self.dim

    def forward(self, frames: Tensor) -> Tensor:
        return tap(frames)


def build_aggregator(method: str, dim: int, rng: np.random.Generator,
                     clusters: int = 8, ghost_clusters: int = 2) -> Module:
    if method == "tap":
        return TemporalAveragePool(dim)
    if method == "gvlad":
        return GhostVLAD(dim, clusters, ghost_clusters, rng)
    raise ContractError(f"unknown aggregation method {method!r}; expected 'tap' or 'gvlad'")


def aggregate(frames: Tensor, method: str, params: GhostVLAD | None = None) -> Tensor:
    if method == "tap":
        return tap(frames)
    if method == "gvlad":
        if params is None:
            raise ContractError("gvlad aggregation needs VLAD parameters")
        return params(frames)
    raise ContractError(f"unknown aggregation method {method!r}; expected 'tap' or 'gvlad'")
