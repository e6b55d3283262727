"""PCM16 mono 16 kHz RIFF/WAVE reading and writing."""

from __future__ import annotations

import os
import struct
import wave

import numpy as np

from .dsp import SAMPLE_RATE, Utterance
from .errors import (MalformedHeaderError, UnsupportedChannelsError, UnsupportedEncodingError,
                     UnsupportedSampleRateError)

WAVE_FORMAT_PCM = 1


def parse_wav_bytes(blob: bytes) -> tuple[dict, np.ndarray]:
    """Return the fmt fields and the int16 payload of a PCM16 mono 16 kHz file."""
    if len(blob) < 12 or blob[:4] != b"RIFF" or blob[8:12] != b"WAVE":
        raise MalformedHeaderError("not a RIFF/WAVE file")
    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(blob):
        cid, size = struct.unpack_from("<4sI", blob, pos)
        body = pos + 8
        if body + size > len(blob):
            raise MalformedHeaderError(f"chunk {cid!r} runs past end of file")
        if cid == b"fmt ":
            if size < 16:
                raise MalformedHeaderError("fmt chunk too short")
            tag, channels, rate, _, align, bits = struct.unpack_from("<HHIIHH", blob, body)
            fmt = {"format": tag, "channels": channels, "rate": rate, "align": align, "bits": bits}
        elif cid == b"data":
            data = blob[body:body + size]
        pos = body + size + (size & 1)
    if fmt is None or data is None:
        raise MalformedHeaderError("missing fmt or data chunk")
    if fmt["format"] != WAVE_FORMAT_PCM or fmt["bits"] != 16:
        raise UnsupportedEncodingError(
            f"only 16-bit PCM is supported (format tag {fmt['format']}, {fmt['bits']} bits)")
    if fmt["channels"] != 1:
        raise UnsupportedChannelsError(f"only mono is supported, file has {fmt['channels']} channels")
    if fmt["rate"] != SAMPLE_RATE:
        raise UnsupportedSampleRateError(f"only {SAMPLE_RATE} Hz is supported, file is {fmt['rate']} Hz")
    if len(data) % 2:
        raise MalformedHeaderError("data chunk holds a partial sample")
    return fmt, np.frombuffer(data, dtype="<i2")


def read_wav(path, speaker_id: str = "", utterance_id: str | None = None) -> Utterance:
    with open(path, "rb") as fh:
        blob = fh.read()
    fmt, pcm = parse_wav_bytes(blob)
    if pcm.size == 0:
        raise MalformedHeaderError("data chunk is empty")
    return Utterance(samples=pcm.astype(np.float64) / 32768.0, sample_rate=fmt["rate"],
                     speaker_id=speaker_id,
                     utterance_id=str(path) if utterance_id is None else utterance_id)


def write_wav(path, samples: np.ndarray, sample_rate: int = SAMPLE_RATE) -> None:
    pcm = np.clip(np.round(np.asarray(samples, dtype=np.float64) * 32768.0), -32768, 32767)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(sample_rate)
        w.writeframes(pcm.astype("<i2").tobytes())
