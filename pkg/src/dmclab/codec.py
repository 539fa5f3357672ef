"""Block-based compressed-video simulator.

Frames are split into 16x16 macroblocks. The first frame of every GOP is
stored raw (the I-frame); each following P-frame is stored as one motion
vector per macroblock plus a full-resolution signed residual. Everything is
integer-exact, so decoding reproduces the input bit for bit.

Array conventions:

* frame: ``uint8`` array ``(3, H, W)``
* motion vectors: ``int`` array ``(2, H/16, W/16)``; channel 0 is ``dx``,
  channel 1 is ``dy``. A vector is the *fetch offset*: macroblock ``(bx, by)``
  of the current frame is predicted from the reference patch whose top-left
  corner sits at ``(16*bx + dx, 16*by + dy)``.
* residual: ``int16`` array ``(3, H, W)`` with values in ``[-255, 255]``
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

MB = 16
DEFAULT_SEARCH_RANGE = 16
DEFAULT_GOP_P_COUNT = 11


class CodecError(ValueError):
    """Raised for malformed frames, fields or containers."""


class RefMode(enum.IntEnum):
    IFRAME = 0
    PREVIOUS = 1


@dataclass
class Gop:
    iframe: np.ndarray
    pframes: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)


@dataclass
class EncodedVideo:
    width: int
    height: int
    gops: list[Gop]
    gop_p_count: int = DEFAULT_GOP_P_COUNT
    ref_mode: RefMode = RefMode.IFRAME
    label: int | None = None

    @property
    def num_frames(self) -> int:
        return len(self.gops) * (1 + self.gop_p_count)

    def iframes(self) -> list[np.ndarray]:
        return [g.iframe for g in self.gops]

    def motion_vectors(self) -> list[np.ndarray]:
        return [mv for g in self.gops for mv, _ in g.pframes]

    def residuals(self) -> list[np.ndarray]:
        return [r for g in self.gops for _, r in g.pframes]


def check_frame(frame: np.ndarray) -> None:
    if frame.ndim != 3 or frame.shape[0] != 3:
        raise CodecError(f"frame must have shape (3, H, W), got {frame.shape}")
    h, w = frame.shape[1:]
    if h <= 0 or w <= 0 or h % MB or w % MB:
        raise CodecError(f"frame size {h}x{w} is not macroblock aligned")
    if frame.dtype != np.uint8:
        raise CodecError(f"frame dtype must be uint8, got {frame.dtype}")


def _check_pair(a: np.ndarray, b: np.ndarray) -> None:
    check_frame(a)
    check_frame(b)
    if a.shape != b.shape:
        raise CodecError(f"frame shapes differ: {a.shape} vs {b.shape}")


def _check_mv(mv: np.ndarray, height: int, width: int) -> None:
    if mv.shape != (2, height // MB, width // MB):
        raise CodecError(
            f"motion field shape {mv.shape} does not match a {height}x{width} frame")


def candidate_offsets(search_range: int) -> np.ndarray:
    """All ``(dx, dy)`` offsets in the window, sorted by tie-break priority.

    Priority is ``|dx| + |dy|`` first, then ``dy``, then ``dx``; taking the
    first minimum over this order implements the full tie-break rule.
    """
    r = np.arange(-search_range, search_range + 1)
    dy, dx = np.meshgrid(r, r, indexing="ij")
    dx, dy = dx.ravel(), dy.ravel()
    order = np.lexsort((dx, dy, np.abs(dx) + np.abs(dy)))
    return np.stack([dx[order], dy[order]], axis=1)


def block_match(current: np.ndarray, reference: np.ndarray,
                search_range: int = DEFAULT_SEARCH_RANGE) -> np.ndarray:
    """Exhaustive SAD block matching with edge-clamped reference sampling."""
    _check_pair(current, reference)
    if search_range < 0:
        raise CodecError("search_range must be non-negative")
    _, h, w = current.shape
    r = search_range
    # SAD sums over channels and pixels alike, so work on interleaved (H, W*3)
    # rows; |a - b| <= 255 keeps int16 exact.
    ref = np.pad(reference, ((0, 0), (r, r), (r, r)), mode="edge")
    ref = ref.transpose(1, 2, 0).reshape(h + 2 * r, (w + 2 * r) * 3).astype(np.int16)
    cur = current.transpose(1, 2, 0).reshape(h, w * 3).astype(np.int16)
    nby, nbx = h // MB, w // MB

    offsets = candidate_offsets(r)
    n = 2 * r + 1
    grid = np.empty((n, n, nby, nbx), dtype=np.int64)  # indexed [dy + r, dx + r]
    diff = np.empty((h, n, w * 3), dtype=np.int16)
    for i in range(n):
        # every horizontal offset at once for vertical offset dy = i - r
        windows = sliding_window_view(ref[i:i + h], w * 3, axis=1)[:, ::3]  # (h, n, 3w)
        np.subtract(windows, cur[:, None, :], out=diff)
        np.abs(diff, out=diff)
        rows = diff.reshape(h, n, nbx, MB * 3).sum(axis=3, dtype=np.int32)
        grid[i] = rows.reshape(nby, MB, n, nbx).sum(axis=1).transpose(1, 0, 2)
    sads = grid[offsets[:, 1] + r, offsets[:, 0] + r]
    best = np.argmin(sads, axis=0)
    mv = offsets[best]  # (nby, nbx, 2)
    return np.ascontiguousarray(mv.transpose(2, 0, 1)).astype(np.int32)


def _clamped_patch_indices(h: int, w: int, mv: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    nby, nbx = mv.shape[1:]
    base_y = np.repeat(np.arange(nby) * MB, MB)[:, None] + np.tile(np.arange(MB), nby)[:, None]
    base_x = np.repeat(np.arange(nbx) * MB, MB)[None, :] + np.tile(np.arange(MB), nbx)[None, :]
    dx = np.repeat(np.repeat(mv[0], MB, axis=0), MB, axis=1)
    dy = np.repeat(np.repeat(mv[1], MB, axis=0), MB, axis=1)
    ys = np.clip(base_y + dy, 0, h - 1)
    xs = np.clip(base_x + dx, 0, w - 1)
    return ys, xs


def motion_compensate(reference: np.ndarray, mv: np.ndarray) -> np.ndarray:
    """Warp ``reference`` block by block along the fetch offsets in ``mv``."""
    check_frame(reference)
    _, h, w = reference.shape
    _check_mv(mv, h, w)
    ys, xs = _clamped_patch_indices(h, w, mv.astype(np.int64))
    return reference[:, ys, xs]


def compute_residual(current: np.ndarray, compensated: np.ndarray) -> np.ndarray:
    _check_pair(current, compensated)
    return current.astype(np.int16) - compensated.astype(np.int16)


def encode(frames, gop_p_count: int = DEFAULT_GOP_P_COUNT,
           search_range: int = DEFAULT_SEARCH_RANGE,
           ref_mode: RefMode = RefMode.IFRAME,
           label: int | None = None) -> EncodedVideo:
    frames = list(frames)
    gop_len = 1 + gop_p_count
    if gop_p_count < 0:
        raise CodecError("gop_p_count must be non-negative")
    if not frames or len(frames) % gop_len:
        raise CodecError(
            f"frame count {len(frames)} is not a positive multiple of {gop_len}")
    for f in frames:
        _check_pair(f, frames[0])
    ref_mode = RefMode(ref_mode)
    _, h, w = frames[0].shape

    gops = []
    for start in range(0, len(frames), gop_len):
        iframe = frames[start]
        gop = Gop(iframe=iframe.copy())
        for k in range(1, gop_len):
            cur = frames[start + k]
            # lossless coding: the reconstructed previous frame equals the input
            ref = iframe if ref_mode == RefMode.IFRAME else frames[start + k - 1]
            mv = block_match(cur, ref, search_range)
            res = compute_residual(cur, motion_compensate(ref, mv))
            gop.pframes.append((mv, res))
        gops.append(gop)
    return EncodedVideo(width=w, height=h, gops=gops, gop_p_count=gop_p_count,
                        ref_mode=ref_mode, label=label)


def decode(ev: EncodedVideo) -> list[np.ndarray]:
    out = []
    for gop in ev.gops:
        check_frame(gop.iframe)
        if gop.iframe.shape != (3, ev.height, ev.width):
            raise CodecError("I-frame size does not match container header")
        if len(gop.pframes) != ev.gop_p_count:
            raise CodecError(
                f"GOP holds {len(gop.pframes)} P-frames, header says {ev.gop_p_count}")
        out.append(gop.iframe.copy())
        prev = gop.iframe
        for mv, res in gop.pframes:
            ref = gop.iframe if ev.ref_mode == RefMode.IFRAME else prev
            if res.shape != ref.shape:
                raise CodecError(f"residual shape {res.shape} does not match frame")
            frame = motion_compensate(ref, mv).astype(np.int16) + res
            if frame.min() < 0 or frame.max() > 255:
                raise CodecError("reconstructed pixel out of range; corrupt residual")
            prev = frame.astype(np.uint8)
            out.append(prev)
    return out


def expand_mv(mv: np.ndarray) -> np.ndarray:
    """Dense ``(2, H, W)`` float32 flow from a block motion field.

    The fetch offset is negated so the result points along the motion of
    content from the reference to the current frame (optical-flow sign).
    """
    if mv.ndim != 3 or mv.shape[0] != 2:
        raise CodecError(f"motion field must have shape (2, h, w), got {mv.shape}")
    dense = np.repeat(np.repeat(mv, MB, axis=1), MB, axis=2)
    return -dense.astype(np.float32)
