"""Full speaker network: backbone -> aggregation -> embedding -> ArcSoftmax head."""

from __future__ import annotations

import numpy as np

from .aggregation import build_aggregator
from .backbone import Backbone, BackboneConfig
from .config import RunConfig
from .head import ArcHead, Embedding
from .nn import Module
from .tensor import Tensor, reshape


def backbone_config(cfg: RunConfig) -> BackboneConfig:
    return BackboneConfig.scaled(cfg.width_divisor, cfg.blocks, variant=cfg.variant,
                                 reduction=cfg.attention_reduction)


class SpeakerNet(Module):
    def __init__(self, cfg: RunConfig, n_classes: int, seed: int | None = None):
        super().__init__()
        rng = np.random.default_rng([cfg.seed if seed is None else seed, 1])
        self.cfg = cfg
        self.n_classes = n_classes
        self.backbone = Backbone(backbone_config(cfg), rng)
        dim = self.backbone.cfg.final_channels
        self.aggregator = build_aggregator(cfg.aggregation, dim, rng, cfg.vlad_clusters,
                                           cfg.vlad_ghost_clusters)
        self.embedding = Embedding(self.aggregator.out_dim, rng, cfg.embed_dim)
        self.head = ArcHead(cfg.embed_dim, n_classes, rng, cfg.arc_scale, cfg.arc_margin)

    def embed(self, x: Tensor) -> Tensor:
        """Spectrogram batch ``N x 1 x 161 x T`` to un-normalized embeddings ``N x D``."""
        frames = self.backbone(x)                     # N x C x 1 x T16
        n, c, _, t = frames.shape
        agg = self.aggregator(reshape(frames, (n, c, t)))
        return self.embedding(agg)

    def forward(self, x: Tensor, target=None, margin: float | None = None) -> Tensor:
        return self.head(self.embed(x), target, margin)
