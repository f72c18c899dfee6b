"""Versioned binary container for model parameters.

Layout (all integers little-endian ``u32``)::

    b"RPLD"  version  len(arch) arch-utf8  len(meta) meta-json-utf8
    n_tensors
    repeated: len(name) name-utf8  ndim  dim_0 .. dim_{ndim-1}  float64-le data

Tensors are stored in the order given, so a save/load round trip is
bit-exact.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

__all__ = ["MAGIC", "VERSION", "CheckpointError", "save_checkpoint", "load_checkpoint", "dumps", "loads"]

MAGIC = b"RPLD"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def dumps(architecture: str, tensors: dict[str, np.ndarray], metadata: dict | None = None) -> bytes:
    parts = [MAGIC, struct.pack("<I", VERSION), _pack_str(architecture)]
    parts.append(_pack_str(json.dumps(metadata or {}, sort_keys=True)))
    parts.append(struct.pack("<I", len(tensors)))
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype="<f8")
        parts.append(_pack_str(name))
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError("truncated checkpoint")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def string(self) -> str:
        return self.take(self.u32()).decode("utf-8")


def loads(buf: bytes) -> tuple[str, dict[str, np.ndarray], dict]:
    """Parse a checkpoint; returns ``(architecture, tensors, metadata)``."""
    r = _Reader(buf)
    if r.take(4) != MAGIC:
        raise CheckpointError("not an RPLD checkpoint")
    version = r.u32()
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    arch = r.string()
    meta = json.loads(r.string())
    tensors = {}
    for _ in range(r.u32()):
        name = r.string()
        ndim = r.u32()
        shape = struct.unpack(f"<{ndim}I", r.take(4 * ndim))
        count = int(np.prod(shape, dtype=np.int64))
        tensors[name] = np.frombuffer(r.take(8 * count), dtype="<f8").reshape(shape).astype(np.float64)
    if r.pos != len(buf):
        raise CheckpointError("trailing bytes after checkpoint")
    return arch, tensors, meta


def save_checkpoint(path, architecture: str, tensors: dict[str, np.ndarray], metadata: dict | None = None) -> Path:
    path = Path(path)
    path.write_bytes(dumps(architecture, tensors, metadata))
    return path


def load_checkpoint(path) -> tuple[str, dict[str, np.ndarray], dict]:
    return loads(Path(path).read_bytes())
