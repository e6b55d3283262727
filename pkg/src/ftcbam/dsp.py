"""Magnitude spectrograms: 20 ms Hamming frames, 10 ms hop, 320-point FFT at 16 kHz."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractError, DimensionError, LengthError, SampleRateError

SAMPLE_RATE = 16000
FRAME = 320
HOP = 160
FFT_SIZE = 320
N_BINS = FFT_SIZE // 2 + 1
STD_FLOOR = 1e-8


@dataclass
class Utterance:
    samples: np.ndarray
    sample_rate: int
    speaker_id: str = ""
    utterance_id: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate <= 0:
            raise SampleRateError("sample rate must be positive")
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise LengthError("an utterance needs a non-empty mono signal")


@dataclass
class Spectrogram:
    values: np.ndarray                 # 1 x 161 x T
    frame_ms: int = 20
    hop_ms: int = 10
    fft_size: int = FFT_SIZE
    normalized: bool = False

    @property
    def frames(self) -> int:
        return self.values.shape[-1]

    @property
    def bins(self) -> int:
        return self.values.shape[-2]


def frame_count(n_samples: int) -> int:
    return 1 + (n_samples - FRAME) // HOP


def spectrogram(u: Utterance) -> Spectrogram:
    if u.sample_rate != SAMPLE_RATE:
        raise SampleRateError(f"expected {SAMPLE_RATE} Hz audio, got {u.sample_rate} Hz")
    if u.samples.size < FRAME:
        raise LengthError(f"signal has {u.samples.size} samples, need at least {FRAME}")
    frames = sliding_window_view(u.samples, FRAME)[::HOP]
    mags = np.abs(np.fft.rfft(frames * np.hamming(FRAME), n=FFT_SIZE, axis=1))
    return Spectrogram(values=mags.T[None].copy())


def bin_stats(s: Spectrogram) -> tuple[np.ndarray, np.ndarray]:
    v = s.values[0]
    return v.mean(axis=1), v.std(axis=1)


def normalize_per_bin(s: Spectrogram, stats: tuple[np.ndarray, np.ndarray] | None = None) -> Spectrogram:
    """Shift and scale each frequency bin; ``stats`` defaults to the spectrogram's own."""
    mu, sd = bin_stats(s) if stats is None else stats
    mu, sd = np.asarray(mu, dtype=np.float64), np.asarray(sd, dtype=np.float64)
    if mu.shape != (s.bins,) or sd.shape != (s.bins,):
        raise DimensionError(f"need {s.bins} per-bin mean/std values, got {mu.shape}/{sd.shape}")
    sd = np.maximum(sd, STD_FLOOR)
    values = (s.values - mu[None, :, None]) / sd[None, :, None]
    return replace(s, values=values, normalized=True)


def random_crop(s: Spectrogram, frames: int, rng: np.random.Generator) -> Spectrogram:
    """Contiguous slice of ``frames`` columns; short inputs are tiled first."""
    if frames < 1:
        raise ContractError("crop width must be at least one frame")
    v = s.values
    t = v.shape[-1]
    if t < frames:
        v = np.tile(v, (1, 1, -(-frames // t)))
        t = v.shape[-1]
    start = int(rng.integers(0, t - frames + 1))
    return replace(s, values=v[..., start:start + frames].copy())


def repeat_pad(s: Spectrogram, frames: int) -> Spectrogram:
    """Tile a spectrogram along time until it has at least ``frames`` columns."""
    t = s.frames
    if t >= frames:
        return s
    v = np.tile(s.values, (1, 1, -(-frames // t)))
    return replace(s, values=v[..., :frames].copy())
