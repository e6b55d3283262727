import struct

import numpy as np
import pytest

from ftcbam.errors import (MalformedHeaderError, UnsupportedChannelsError, UnsupportedEncodingError,
                           UnsupportedSampleRateError, WavError)
from ftcbam.wav import parse_wav_bytes, read_wav, write_wav


def _riff(pcm=b"\x00\x00" * 8, tag=1, channels=1, rate=16000, bits=16, extra=b""):
    fmt = struct.pack("<HHIIHH", tag, channels, rate, rate * channels * bits // 8,
                      channels * bits // 8, bits)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt + extra
    body += b"data" + struct.pack("<I", len(pcm)) + pcm
    return b"RIFF" + struct.pack("<I", len(body)) + body


def test_silence_reads_as_zeros(tmp_path):
    path = tmp_path / "quiet.wav"
    path.write_bytes(_riff(b"\x00\x00" * 400))
    utt = read_wav(path, "s1")
    assert utt.sample_rate == 16000 and utt.speaker_id == "s1"
    assert utt.samples.shape == (400,) and not utt.samples.any()


def test_full_scale_square_wave_scaling(tmp_path):
    pcm = np.tile(np.array([32767, -32768], dtype="<i2"), 50)
    path = tmp_path / "square.wav"
    path.write_bytes(_riff(pcm.tobytes()))
    s = read_wav(path).samples
    assert s.max() == pytest.approx(32767 / 32768) and s.min() == -1.0
    assert np.all(np.abs(s) <= 1.0)


def test_unknown_chunks_are_skipped():
    _, pcm = parse_wav_bytes(_riff(b"\x01\x00\x02\x00", extra=b"LIST" + struct.pack("<I", 3) + b"abc\x00"))
    np.testing.assert_array_equal(pcm, [1, 2])


def test_write_read_round_trip(tmp_path):
    x = np.random.default_rng(0).uniform(-0.9, 0.9, 1000)
    write_wav(tmp_path / "a" / "x.wav", x)
    y = read_wav(tmp_path / "a" / "x.wav").samples
    assert np.max(np.abs(x - y)) <= 0.5 / 32768 + 1e-12


@pytest.mark.parametrize("blob, error", [
    (b"RIFX0000WAVE", MalformedHeaderError),
    (_riff()[:-6], MalformedHeaderError),                     # truncated data chunk
    (_riff(b"\x00\x00\x00"), MalformedHeaderError),           # half a sample
    (_riff(tag=3, bits=32, pcm=b"\x00" * 8), UnsupportedEncodingError),
    (_riff(bits=8, pcm=b"\x00" * 8), UnsupportedEncodingError),
    (_riff(channels=2), UnsupportedChannelsError),
    (_riff(rate=8000), UnsupportedSampleRateError),
    (_riff()[:36], MalformedHeaderError),                     # no data chunk at all
])
def test_each_defect_has_its_own_error(blob, error):
    with pytest.raises(error):
        parse_wav_bytes(blob)
    assert issubclass(error, WavError)


def test_empty_data_chunk(tmp_path):
    path = tmp_path / "empty.wav"
    path.write_bytes(_riff(b""))
    with pytest.raises(MalformedHeaderError):
        read_wav(path)
