"""Random frequency/time masking used for training augmentation and the corruption ablation."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dsp import Spectrogram
from .errors import ContractError

MODES = ("freq", "time", "freq+time")


@dataclass(frozen=True)
class MaskPolicy:
    p_apply: float = 0.40
    max_instances: int = 2
    max_freq_bins: int = 30
    max_time_frames: int = 40
    mode: str = "freq+time"
    contiguous: bool = True

    def __post_init__(self):
        if not 0.0 <= self.p_apply <= 1.0:
            raise ContractError("p_apply must be a probability")
        if self.max_instances < 1 or self.max_freq_bins < 1 or self.max_time_frames < 1:
            raise ContractError("mask maxima must be positive")
        if self.mode not in MODES:
            raise ContractError(f"mask mode must be one of {MODES}, got {self.mode!r}")


@dataclass
class MaskRecord:
    applied: bool
    freq_bands: list
    time_bands: list


def _draw_band(extent: int, max_width: int, contiguous: bool, rng) -> np.ndarray:
    width = int(rng.integers(1, min(max_width, extent) + 1))
    if contiguous:
        start = int(rng.integers(0, extent - width + 1))
        return np.arange(start, start + width)
    return np.sort(rng.choice(extent, size=width, replace=False))


def apply_masks(s: Spectrogram, policy: MaskPolicy, rng: np.random.Generator,
                record: list | None = None) -> Spectrogram:
    """Zero up to ``max_instances`` random bands per active axis with probability ``p_apply``.

    The Bernoulli draw happens first and always, so a policy with
    ``p_apply=0`` returns the input object unchanged.
    """
    applied = rng.random() < policy.p_apply
    freq_bands, time_bands = [], []
    if applied:
        values = s.values.copy()
        bins, frames = values.shape[-2], values.shape[-1]
        n = int(rng.integers(1, policy.max_instances + 1))
        for _ in range(n):
            if policy.mode in ("freq", "freq+time"):
                band = _draw_band(bins, policy.max_freq_bins, policy.contiguous, rng)
                values[..., band, :] = 0.0
                freq_bands.append(band)
            if policy.mode in ("time", "freq+time"):
                band = _draw_band(frames, policy.max_time_frames, policy.contiguous, rng)
                values[..., band] = 0.0
                time_bands.append(band)
        out = replace(s, values=values)
    else:
        out = s
    if record is not None:
        record.append(MaskRecord(applied, freq_bands, time_bands))
    return out
