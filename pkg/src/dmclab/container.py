"""DMCV binary container for encoded videos, plus raw planar RGB clip files.

Layout (all integers little-endian)::

    b"DMCV"  version:u16=1
    width:u16 height:u16 gop_p_count:u8 ref_mode:u8 gop_count:u32 label:i32 (-1 = none)
    per GOP:
        I-frame      3*H*W bytes, planar RGB
        per P-frame:
            MV grid  (H/16)*(W/16) pairs of i8 (dx, dy), row-major
            residual 3*H*W i16, planar
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .codec import MB, CodecError, EncodedVideo, Gop, RefMode

MAGIC = b"DMCV"
VERSION = 1
_HEADER = struct.Struct("<4sHHHBBIi")


def atomic_write_bytes(path, payload: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps(ev: EncodedVideo) -> bytes:
    label = -1 if ev.label is None else int(ev.label)
    parts = [_HEADER.pack(MAGIC, VERSION, ev.width, ev.height, ev.gop_p_count,
                          int(ev.ref_mode), len(ev.gops), label)]
    for gop in ev.gops:
        parts.append(np.ascontiguousarray(gop.iframe, dtype=np.uint8).tobytes())
        for mv, res in gop.pframes:
            if np.abs(mv).max(initial=0) > 127:
                raise CodecError("motion vector component does not fit in i8")
            parts.append(np.ascontiguousarray(mv.transpose(1, 2, 0), dtype=np.int8).tobytes())
            parts.append(np.ascontiguousarray(res, dtype="<i2").tobytes())
    return b"".join(parts)


def loads(buf: bytes) -> EncodedVideo:
    if len(buf) < _HEADER.size:
        raise CodecError("truncated DMCV header")
    magic, version, w, h, p_count, ref_mode, n_gops, label = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise CodecError(f"bad magic {magic!r}")
    if version != VERSION:
        raise CodecError(f"unsupported DMCV version {version}")
    if w == 0 or h == 0 or w % MB or h % MB:
        raise CodecError(f"bad frame size {w}x{h}")
    try:
        ref_mode = RefMode(ref_mode)
    except ValueError as exc:
        raise CodecError(f"bad ref_mode {ref_mode}") from exc

    frame_bytes = 3 * h * w
    mv_bytes = 2 * (h // MB) * (w // MB)
    expected = _HEADER.size + n_gops * (frame_bytes + p_count * (mv_bytes + 2 * frame_bytes))
    if len(buf) != expected:
        raise CodecError(f"DMCV payload is {len(buf)} bytes, expected {expected}")

    pos = _HEADER.size
    gops = []
    for _ in range(n_gops):
        iframe = np.frombuffer(buf, np.uint8, frame_bytes, pos).reshape(3, h, w).copy()
        pos += frame_bytes
        gop = Gop(iframe=iframe)
        for _ in range(p_count):
            mv = np.frombuffer(buf, np.int8, mv_bytes, pos).reshape(h // MB, w // MB, 2)
            pos += mv_bytes
            res = np.frombuffer(buf, "<i2", frame_bytes, pos).reshape(3, h, w)
            pos += 2 * frame_bytes
            gop.pframes.append((mv.transpose(2, 0, 1).astype(np.int32),
                                res.astype(np.int16)))
        gops.append(gop)
    return EncodedVideo(width=w, height=h, gops=gops, gop_p_count=p_count,
                        ref_mode=ref_mode, label=None if label < 0 else label)


def save(path, ev: EncodedVideo) -> None:
    atomic_write_bytes(path, dumps(ev))


def load(path) -> EncodedVideo:
    return loads(Path(path).read_bytes())


# Raw clips: ``name.rgb`` holds frames back to back, each planar (3, H, W)
# uint8; ``name.rgb.hdr`` is a key=value sidecar with width, height, frames.

def write_raw(path, frames) -> None:
    frames = [np.asarray(f, dtype=np.uint8) for f in frames]
    _, h, w = frames[0].shape
    atomic_write_bytes(path, b"".join(f.tobytes() for f in frames))
    hdr = f"width={w}\nheight={h}\nframes={len(frames)}\n"
    atomic_write_bytes(str(path) + ".hdr", hdr.encode())


def read_raw(path) -> list[np.ndarray]:
    from .manifest import read_kv

    meta = read_kv(str(path) + ".hdr")
    w, h, n = int(meta["width"]), int(meta["height"]), int(meta["frames"])
    data = np.fromfile(path, dtype=np.uint8)
    if data.size != n * 3 * h * w:
        raise CodecError(f"raw file holds {data.size} bytes, header implies {n * 3 * h * w}")
    return list(data.reshape(n, 3, h, w))
