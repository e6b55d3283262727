"""PRN-50v2: a slimmed pre-activation ResNet-50 front-end for 1 x 161 x T spectrograms.

Layout (channels x frequency x time, T16 = floor(T / 16)):

    stem   conv 7x7, 64, stride (2,1), pad (2,3)    64 x 80 x T
    pool   max 2x2, stride 2                         64 x 40 x T/2
    stage1 [1x1 32, 3x3 32, 1x1 64]  x 3             64 x 40 x T/2
    stage2 [1x1 64, 3x3 64, 1x1 128] x 4            128 x 20 x T/4
    stage3 [1x1 128, 3x3 128, 1x1 256] x 6          256 x 10 x T/8
    stage4 [1x1 256, 3x3 256, 1x1 512] x 3          512 x 5 x T/16
    final  BN-ReLU, conv 5x1, 256, BN-ReLU          256 x 1 x T16

The published layer table lists the final output as 512 x 1 x T/16 while
the conv row says 256 filters; 256 is used here so the output width equals
the filter count, as in every other row.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import functional as F
from .attention import CBAM, VARIANTS, attention_param_count
from .errors import ContractError, GeometryError
from .nn import BatchNorm, Conv2d, Module
from .tensor import Tensor, add, as_tensor, getitem, relu, reshape

MIN_FRAMES = 16


@dataclass(frozen=True)
class BackboneConfig:
    stage_blocks: tuple[int, ...] = (3, 4, 6, 3)
    bottleneck_widths: tuple[int, ...] = (32, 64, 128, 256)
    output_widths: tuple[int, ...] = (64, 128, 256, 512)
    stem_channels: int = 64
    final_channels: int = 256
    variant: str = "none"
    reduction: int = 16
    freq_bins: int = 161

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ContractError(f"unknown attention variant {self.variant!r}")
        if not (len(self.stage_blocks) == len(self.bottleneck_widths) == len(self.output_widths)):
            raise ContractError("stage_blocks, bottleneck_widths and output_widths must align")

    @classmethod
    def scaled(cls, divisor: int = 1, stage_blocks=(3, 4, 6, 3), **kw) -> "BackboneConfig":
        """Full-width config divided by ``divisor`` (``divisor=4`` with one block per stage is the micro net)."""
        base = cls()
        return cls(stage_blocks=tuple(stage_blocks),
                   bottleneck_widths=tuple(max(1, w // divisor) for w in base.bottleneck_widths),
                   output_widths=tuple(max(1, w // divisor) for w in base.output_widths),
                   stem_channels=max(1, base.stem_channels // divisor),
                   final_channels=max(1, base.final_channels // divisor), **kw)

    def with_variant(self, variant: str) -> "BackboneConfig":
        return replace(self, variant=variant)


def _crop_half(t: Tensor, h: int, w: int) -> Tensor:
    """Trim a stride-2 output to floor(h/2) x floor(w/2)."""
    hh, ww = h // 2, w // 2
    if t.shape[2] == hh and t.shape[3] == ww:
        return t
    return getitem(t, (slice(None), slice(None), slice(0, hh), slice(0, ww)))


class Bottleneck(Module):
    """Pre-activation bottleneck: (BN-ReLU-Conv) x 3, attention on the branch, then the shortcut join."""

    def __init__(self, cin: int, width: int, cout: int, stride: int, variant: str,
                 rng: np.random.Generator, reduction: int = 16):
        super().__init__()
        self.stride = stride
        self.bn1 = BatchNorm(cin)
        self.conv1 = Conv2d(F.ConvSpec((1, 1), cin, width), rng)
        self.bn2 = BatchNorm(width)
        self.conv2 = Conv2d(F.ConvSpec((3, 3), width, width, stride=stride, padding=1), rng)
        self.bn3 = BatchNorm(width)
        self.conv3 = Conv2d(F.ConvSpec((1, 1), width, cout), rng)
        self.has_projection = cin != cout or stride != 1
        if self.has_projection:
            self.projection = Conv2d(F.ConvSpec((1, 1), cin, cout, stride=stride), rng)
        self.attention = CBAM(cout, variant, rng, reduction)

    def forward(self, x: Tensor) -> Tensor:
        h, w = x.shape[2], x.shape[3]
        pre = relu(self.bn1(x))
        if self.has_projection:
            shortcut = self.projection(pre)
            if self.stride == 2:
                shortcut = _crop_half(shortcut, h, w)
        else:
            shortcut = x
        out = self.conv1(pre)
        out = self.conv2(relu(self.bn2(out)))
        if self.stride == 2:
            out = _crop_half(out, h, w)
        out = self.conv3(relu(self.bn3(out)))
        out = self.attention(out)
        return add(out, shortcut)


class Backbone(Module):
    def __init__(self, cfg: BackboneConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        self.stem = Conv2d(F.ConvSpec((7, 7), 1, cfg.stem_channels, stride=(2, 1), padding=(2, 3)), rng)
        blocks = []
        cin = cfg.stem_channels
        self.stage_ends = []
        for s, (count, width, cout) in enumerate(zip(cfg.stage_blocks, cfg.bottleneck_widths,
                                                     cfg.output_widths)):
            for b in range(count):
                stride = 2 if (s > 0 and b == 0) else 1
                blocks.append(Bottleneck(cin, width, cout, stride, cfg.variant, rng, cfg.reduction))
                cin = cout
            self.stage_ends.append(len(blocks) - 1)
        self.blocks = blocks
        self.final_bn_in = BatchNorm(cin)
        self.final_conv = Conv2d(F.ConvSpec((5, 1), cin, cfg.final_channels), rng)
        self.final_bn_out = BatchNorm(cfg.final_channels)

    @property
    def attention_blocks(self) -> list[CBAM]:
        return [b.attention for b in self.blocks]

    def forward(self, x: Tensor, trace: list | None = None) -> Tensor:
        """Map ``1 x 161 x T`` (or ``N x 1 x 161 x T``) to ``final_channels x 1 x T16``."""
        x = as_tensor(x)
        squeezed = x.ndim == 3
        if squeezed:
            x = reshape(x, (1,) + x.shape)
        if x.ndim != 4 or x.shape[1] != 1:
            raise ContractError(f"backbone input must be 1 x F x T, got {x.shape}")
        if x.shape[3] < MIN_FRAMES:
            raise GeometryError(f"need at least {MIN_FRAMES} frames, got {x.shape[3]}")

        def note(label, t):
            if trace is not None:
                trace.append((label, tuple(t.shape[1:])))

        note("input", x)
        out = self.stem(x)
        note("conv 7x7 stem", out)
        out = F.max_pool(out, (2, 2), (2, 2))
        note("maxpool 2x2", out)
        ends = set(self.stage_ends)
        stage = 1
        for i, block in enumerate(self.blocks):
            out = block(out)
            if i in ends:
                note(f"stage {stage}", out)
                stage += 1
        out = relu(self.final_bn_in(out))
        out = self.final_conv(out)
        out = relu(self.final_bn_out(out))
        note("conv 5x1 final", out)
        if out.shape[2] != 1:
            raise GeometryError(f"frequency extent after final conv is {out.shape[2]}, expected 1")
        return reshape(out, out.shape[1:]) if squeezed else out


def build_backbone(cfg: BackboneConfig, seed_or_rng=0) -> Backbone:
    rng = seed_or_rng if isinstance(seed_or_rng, np.random.Generator) else np.random.default_rng(seed_or_rng)
    return Backbone(cfg, rng)


def param_count(model: Module) -> int:
    return model.param_count()


def param_breakdown(model: Backbone) -> dict[str, int]:
    """Scalar parameter counts per stage, attention, and stem/final layers."""
    stage_of = {}
    start = 0
    for s, end in enumerate(model.stage_ends):
        for i in range(start, end + 1):
            stage_of[str(i)] = f"stage {s + 1}"
        start = end + 1
    groups: dict[str, int] = {}
    for name, p in model.named_parameters():
        parts = name.split(".")
        if parts[0] == "blocks":
            key = "attention" if parts[2] == "attention" else stage_of[parts[1]]
        elif parts[0] == "stem":
            key = "stem"
        else:
            key = "final"
        groups[key] = groups.get(key, 0) + p.size
    groups["total"] = model.param_count()
    return groups


def attention_delta(cfg: BackboneConfig, variant: str) -> int:
    """Closed-form count of scalars the attention blocks add over variant ``none``."""
    total = 0
    for count, cout in zip(cfg.stage_blocks, cfg.output_widths):
        total += count * attention_param_count(cout, variant, cfg.reduction)
    return total


def expected_shapes(cfg: BackboneConfig, frames: int) -> list[tuple[str, tuple[int, int, int]]]:
    """Shape trace implied by the layer table, for comparison against a real forward pass."""
    h = (cfg.freq_bins + 4 - 7) // 2 + 1
    t = frames
    rows = [("input", (1, cfg.freq_bins, frames)), ("conv 7x7 stem", (cfg.stem_channels, h, t))]
    h, t = h // 2, t // 2
    rows.append(("maxpool 2x2", (cfg.stem_channels, h, t)))
    for s, cout in enumerate(cfg.output_widths):
        if s > 0:
            h, t = h // 2, t // 2
        rows.append((f"stage {s + 1}", (cout, h, t)))
    rows.append(("conv 5x1 final", (cfg.final_channels, h - 4, t)))
    return rows

