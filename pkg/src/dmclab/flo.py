"""Middlebury ``.flo`` optical-flow files.

Header: float32 202021.25 (the bytes ``PIEH``), int32 width, int32 height;
then ``height * width`` interleaved (u, v) float32 pairs, row-major, all
little-endian. In memory a flow field is a ``(2, H, W)`` float32 array with
channel 0 = u (horizontal) and channel 1 = v (vertical).
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .container import atomic_write_bytes

MAGIC = 202021.25
MAGIC_BYTES = b"PIEH"


class FloError(ValueError):
    pass


def flo_bytes(flow: np.ndarray) -> bytes:
    flow = np.asarray(flow, dtype=np.float32)
    if flow.ndim != 3 or flow.shape[0] != 2:
        raise FloError(f"flow must have shape (2, H, W), got {flow.shape}")
    _, h, w = flow.shape
    if h < 1 or w < 1:
        raise FloError("flow dimensions must be positive")
    header = MAGIC_BYTES + struct.pack("<ii", w, h)
    return header + np.ascontiguousarray(flow.transpose(1, 2, 0), dtype="<f4").tobytes()


def parse_flo(buf: bytes) -> np.ndarray:
    if len(buf) < 12:
        raise FloError("truncated .flo header")
    if buf[:4] != MAGIC_BYTES:
        (magic,) = struct.unpack("<f", buf[:4])
        raise FloError(f"bad .flo magic {magic!r}")
    w, h = struct.unpack_from("<ii", buf, 4)
    if w < 1 or h < 1:
        raise FloError(f"bad .flo dimensions {w}x{h}")
    need = 12 + 8 * w * h
    if len(buf) < need:
        raise FloError(f".flo payload truncated: {len(buf)} bytes, need {need}")
    data = np.frombuffer(buf, "<f4", 2 * w * h, 12).reshape(h, w, 2)
    return np.ascontiguousarray(data.transpose(2, 0, 1), dtype=np.float32)


def write_flo(path, flow: np.ndarray) -> None:
    atomic_write_bytes(path, flo_bytes(flow))


def read_flo(path) -> np.ndarray:
    return parse_flo(Path(path).read_bytes())
