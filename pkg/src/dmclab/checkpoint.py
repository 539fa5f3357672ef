"""DMCW checkpoint container.

::

    b"DMCW" version:u16=1 count:u32
    per tensor: name_len:u16 name:utf-8 rank:u8 dims:u32*rank payload:f32*prod(dims)

Integers and floats are little-endian. Tensors are written in insertion order.
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

from .container import atomic_write_bytes

MAGIC = b"DMCW"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(tensors: dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<HI", VERSION, len(tensors))]
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        arr = np.asarray(arr)
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def loads(buf: bytes) -> dict[str, np.ndarray]:
    if buf[:4] != MAGIC:
        raise CheckpointError(f"bad magic {buf[:4]!r}")
    try:
        version, count = struct.unpack_from("<HI", buf, 4)
        if version != VERSION:
            raise CheckpointError(f"unsupported DMCW version {version}")
        pos = 10
        out = {}
        for _ in range(count):
            (n,) = struct.unpack_from("<H", buf, pos)
            pos += 2
            name = buf[pos:pos + n].decode("utf-8")
            pos += n
            (rank,) = struct.unpack_from("<B", buf, pos)
            pos += 1
            dims = struct.unpack_from(f"<{rank}I", buf, pos)
            pos += 4 * rank
            size = int(np.prod(dims, dtype=np.int64))
            if pos + 4 * size > len(buf):
                raise CheckpointError(f"truncated payload for {name}")
            out[name] = np.frombuffer(buf, "<f4", size, pos).reshape(dims).astype(np.float32)
            pos += 4 * size
    except struct.error as exc:
        raise CheckpointError("truncated checkpoint") from exc
    if pos != len(buf):
        raise CheckpointError(f"{len(buf) - pos} trailing bytes")
    return out


def save(path, tensors: dict[str, np.ndarray]) -> None:
    atomic_write_bytes(path, dumps(tensors))


def load(path) -> dict[str, np.ndarray]:
    return loads(Path(path).read_bytes())


def params_hash(params) -> str:
    """SHA-256 over names and raw bytes of a name -> Tensor/array mapping."""
    h = hashlib.sha256()
    for name, p in params.items():
        arr = np.ascontiguousarray(getattr(p, "data", p))
        h.update(name.encode())
        h.update(str(arr.dtype).encode() + str(arr.shape).encode())
        h.update(arr.tobytes())
    return h.hexdigest()
