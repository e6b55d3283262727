"""Versioned little-endian checkpoint files.

Layout::

    magic        8 bytes  b"FTCBCKPT"
    version      u32
    step         u64
    config       u32 length + UTF-8 key = value text
    rng state    u32 length + UTF-8 JSON
    header crc   u32 CRC32 of every byte above
    n_tensors    u32
    per tensor:  u32 name length, name, u8 dtype tag, u32 rank, u64 extents,
                 u32 CRC32 of payload, payload bytes
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
import zlib
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .errors import CheckpointError, IntegrityError, VersionMismatchError

MAGIC = b"FTCBCKPT"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<i8")}
_TAGS = {v: k for k, v in _DTYPES.items()}


@dataclass
class Checkpoint:
    tensors: "OrderedDict[str, np.ndarray]"
    config_text: str = ""
    rng_state: dict = field(default_factory=dict)
    step: int = 0
    version: int = VERSION

    def subset(self, prefix: str) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((k[len(prefix):], v) for k, v in self.tensors.items() if k.startswith(prefix))


def _encode(ckpt: Checkpoint) -> bytes:
    cfg = ckpt.config_text.encode("utf-8")
    rng = json.dumps(ckpt.rng_state, sort_keys=True).encode("utf-8")
    head = (MAGIC + struct.pack("<IQ", VERSION, ckpt.step)
            + struct.pack("<I", len(cfg)) + cfg + struct.pack("<I", len(rng)) + rng)
    parts = [head, struct.pack("<I", zlib.crc32(head)), struct.pack("<I", len(ckpt.tensors))]
    for name, arr in ckpt.tensors.items():
        arr = np.asarray(arr)
        dt = arr.dtype.newbyteorder("<")
        if dt not in _TAGS:
            raise CheckpointError(f"{name}: unsupported dtype {arr.dtype}")
        payload = np.ascontiguousarray(arr, dtype=dt).tobytes()
        key = name.encode("utf-8")
        parts.append(struct.pack("<I", len(key)) + key + struct.pack("<BI", _TAGS[dt], arr.ndim)
                     + struct.pack(f"<{arr.ndim}Q", *arr.shape)
                     + struct.pack("<I", zlib.crc32(payload)) + payload)
    return b"".join(parts)


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    """Write atomically: a temp file in the target directory, then rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".ckpt-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(_encode(ckpt))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointError("checkpoint is truncated")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        blob = fh.read()
    r = _Reader(blob)
    if r.take(8) != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, step = r.unpack("<IQ")
    if version != VERSION:
        raise VersionMismatchError(f"{path}: checkpoint version {version}, expected {VERSION}")
    cfg = r.take(r.unpack("<I")[0])
    rng = r.take(r.unpack("<I")[0])
    head_end = r.pos
    (head_crc,) = r.unpack("<I")
    if zlib.crc32(blob[:head_end]) != head_crc:
        raise IntegrityError(f"{path}: header checksum mismatch")
    (count,) = r.unpack("<I")
    tensors = OrderedDict()
    for _ in range(count):
        name = r.take(r.unpack("<I")[0]).decode("utf-8")
        tag, rank = r.unpack("<BI")
        if tag not in _DTYPES:
            raise CheckpointError(f"{name}: unknown dtype tag {tag}")
        shape = r.unpack(f"<{rank}Q")
        (crc,) = r.unpack("<I")
        dt = _DTYPES[tag]
        payload = r.take(int(np.prod(shape, dtype=np.int64)) * dt.itemsize)
        if zlib.crc32(payload) != crc:
            raise IntegrityError(f"{path}: checksum mismatch in tensor {name!r}")
        tensors[name] = np.frombuffer(payload, dtype=dt).reshape(shape).copy()
    if r.pos != len(blob):
        raise CheckpointError(f"{path}: trailing bytes after last tensor")
    return Checkpoint(tensors, cfg.decode("utf-8"), json.loads(rng.decode("utf-8")), step, version)
