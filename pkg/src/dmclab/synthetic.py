"""Synthetic clips with exact ground-truth flow.

A clip is a rough random texture (the background) seen through a camera
that pans, plus a few small bright discs ("actors") placed on a ring around
the frame centre. The class is the actors' motion program; the pan is a
per-clip nuisance drawn independently of the class. Actors are smaller than
a macroblock, so block matching mostly follows the pan and misses them,
while the residual shows where they moved.

Ground-truth flow for a P-frame is the displacement of the content at each
pixel since that frame's codec reference (previous frame or GOP I-frame),
matching the sign of :func:`dmclab.codec.expand_mv`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter, map_coordinates

from . import codec
from .codec import EncodedVideo, RefMode

PROGRAMS = ("right", "left", "down", "up", "rotate_cw", "rotate_ccw", "zoom_out", "zoom_in")
PAN_CHOICES = ((0, 0), (1, 0), (-1, 0), (0, 1), (0, -1))
_MARGIN = 48


@dataclass(frozen=True)
class SyntheticDatasetSpec:
    num_classes: int = 8
    clips_per_class: int = 25
    frames_per_clip: int = 12
    size: int = 64
    seed: int = 0
    gop_p_count: int = 11
    search_range: int = codec.DEFAULT_SEARCH_RANGE
    ref_mode: RefMode = RefMode.PREVIOUS
    num_actors: int = 6
    actor_radius: float = 5.0
    actor_speed: float = 1.0
    ring_radius: float = 18.0
    pans: tuple = PAN_CHOICES
    noise_sigma: float = 0.0

    def validate(self) -> None:
        if not 1 <= self.num_classes <= len(PROGRAMS):
            raise ValueError(f"num_classes must be in 1..{len(PROGRAMS)}")
        if self.size <= 0 or self.size % codec.MB:
            raise ValueError("size must be a positive multiple of 16")
        gop_len = self.gop_p_count + 1
        if self.frames_per_clip <= 0 or self.frames_per_clip % gop_len:
            raise ValueError(f"frames_per_clip must be a positive multiple of {gop_len}")
        if self.clips_per_class < 0:
            raise ValueError("clips_per_class must be non-negative")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")


@dataclass(frozen=True)
class MotionProgram:
    """Per-frame motion: camera pan (pixels/frame) plus an actor program."""

    pan: tuple[float, float] = (0.0, 0.0)
    actors: str | None = None
    actor_speed: float = 1.0

    def actor_offsets(self, start: np.ndarray, center: np.ndarray, t: float) -> np.ndarray:
        """Actor centres ``(n, 2)`` as ``(x, y)`` after ``t`` frames, relative
        to the scene (i.e. before the pan is applied)."""
        v = self.actor_speed
        if self.actors is None:
            return start
        rel = start - center
        radius = np.hypot(rel[:, 0], rel[:, 1])
        angle = np.arctan2(rel[:, 1], rel[:, 0])
        if self.actors in ("right", "left", "down", "up"):
            d = {"right": (1, 0), "left": (-1, 0), "down": (0, 1), "up": (0, -1)}[self.actors]
            return start + v * t * np.asarray(d, dtype=np.float64)
        if self.actors in ("rotate_cw", "rotate_ccw"):
            # clockwise on screen (y axis points down) means increasing angle
            sign = 1.0 if self.actors == "rotate_cw" else -1.0
            a = angle + sign * v * t / radius
            return center + radius[:, None] * np.stack([np.cos(a), np.sin(a)], axis=1)
        if self.actors in ("zoom_out", "zoom_in"):
            sign = 1.0 if self.actors == "zoom_out" else -1.0
            r = radius + sign * v * t
            return center + r[:, None] * np.stack([np.cos(angle), np.sin(angle)], axis=1)
        raise ValueError(f"unknown actor program {self.actors!r}")


@dataclass
class Clip:
    video: EncodedVideo
    flows: list[np.ndarray]
    program: MotionProgram
    frames: list[np.ndarray] | None = None

    @property
    def label(self) -> int | None:
        return self.video.label


@dataclass
class SyntheticDataset:
    spec: SyntheticDatasetSpec
    clips: list[Clip] = field(default_factory=list)

    def __len__(self):
        return len(self.clips)

    def labels(self) -> np.ndarray:
        return np.array([c.label for c in self.clips])


def _texture(rng: np.random.Generator, size: int, sigma: float, low: float, high: float):
    noise = rng.random((3, size, size))
    tex = np.stack([gaussian_filter(c, sigma, mode="wrap") for c in noise])
    tex -= tex.min()
    tex /= max(tex.max(), 1e-9)
    return low + (high - low) * tex


def _sample(tex: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    return np.stack([map_coordinates(c, [ys, xs], order=1, mode="nearest") for c in tex])


class _Scene:
    """One GOP's worth of renderable state."""

    def __init__(self, rng: np.random.Generator, spec: SyntheticDatasetSpec, program: MotionProgram):
        s = spec.size
        self.size = s
        self.program = program
        self.bg = _texture(rng, s + 2 * _MARGIN, 0.8, 20.0, 160.0)
        self.center = np.array([(s - 1) / 2.0, (s - 1) / 2.0])
        if program.actors is None:
            self.actor_start = np.zeros((0, 2))
        else:
            phase = rng.uniform(0, 2 * np.pi)
            angles = phase + 2 * np.pi * np.arange(spec.num_actors) / spec.num_actors
            self.actor_start = self.center + spec.ring_radius * np.stack(
                [np.cos(angles), np.sin(angles)], axis=1)
        self.radius = spec.actor_radius
        patch = int(np.ceil(2 * self.radius)) + 4
        self.actor_tex = [_texture(rng, patch, 0.7, 170.0, 255.0) for _ in range(len(self.actor_start))]
        yy, xx = np.mgrid[0:s, 0:s].astype(np.float64)
        self.yy, self.xx = yy, xx

    def pan_offset(self, t: float) -> np.ndarray:
        return np.asarray(self.program.pan, dtype=np.float64) * t

    def actor_centers(self, t: float) -> np.ndarray:
        return self.program.actor_offsets(self.actor_start, self.center, t) + self.pan_offset(t)

    def render(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Frame as float RGB and an integer map of which actor owns each pixel (-1 = bg)."""
        px, py = self.pan_offset(t)
        img = _sample(self.bg, self.yy - py + _MARGIN, self.xx - px + _MARGIN)
        owner = np.full((self.size, self.size), -1, dtype=np.int64)
        for i, (cx, cy) in enumerate(self.actor_centers(t)):
            dist = np.hypot(self.xx - cx, self.yy - cy)
            alpha = np.clip(self.radius + 0.5 - dist, 0.0, 1.0)
            if not alpha.any():
                continue
            half = (self.actor_tex[i].shape[1] - 1) / 2.0
            tex = _sample(self.actor_tex[i], self.yy - cy + half, self.xx - cx + half)
            img = alpha * tex + (1 - alpha) * img
            owner[alpha >= 0.5] = i
        return img, owner

    def flow(self, t: float, t_ref: float, owner: np.ndarray) -> np.ndarray:
        flow = np.empty((2, self.size, self.size), dtype=np.float32)
        pan = self.pan_offset(t) - self.pan_offset(t_ref)
        flow[0], flow[1] = pan[0], pan[1]
        if len(self.actor_start):
            disp = self.actor_centers(t) - self.actor_centers(t_ref)
            for i, (dx, dy) in enumerate(disp):
                mask = owner == i
                flow[0][mask] = dx
                flow[1][mask] = dy
        return flow


def render_clip(rng: np.random.Generator, spec: SyntheticDatasetSpec, program: MotionProgram,
                label: int | None = None, keep_frames: bool = False) -> Clip:
    """Render, encode and attach ground-truth flow for one clip."""
    gop_len = spec.gop_p_count + 1
    frames, flows = [], []
    for _ in range(spec.frames_per_clip // gop_len):
        scene = _Scene(rng, spec, program)
        for k in range(gop_len):
            img, owner = scene.render(k)
            if spec.noise_sigma:
                img = img + rng.normal(0.0, spec.noise_sigma, img.shape)
            frames.append(np.clip(np.rint(img), 0, 255).astype(np.uint8))
            if k:
                t_ref = 0 if spec.ref_mode == RefMode.IFRAME else k - 1
                flows.append(scene.flow(k, t_ref, owner))
    video = codec.encode(frames, spec.gop_p_count, spec.search_range, spec.ref_mode, label)
    return Clip(video=video, flows=flows, program=program, frames=frames if keep_frames else None)


def class_program(label: int, pan, spec: SyntheticDatasetSpec) -> MotionProgram:
    return MotionProgram(pan=tuple(float(p) for p in pan), actors=PROGRAMS[label],
                         actor_speed=spec.actor_speed)


def generate_synthetic_dataset(spec: SyntheticDatasetSpec, keep_frames: bool = False,
                               progress=None) -> SyntheticDataset:
    """All clips, ordered class by class; each clip draws its own pan."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    ds = SyntheticDataset(spec)
    for label in range(spec.num_classes):
        for _ in range(spec.clips_per_class):
            pan = spec.pans[rng.integers(len(spec.pans))]
            ds.clips.append(render_clip(rng, spec, class_program(label, pan, spec), label, keep_frames))
            if progress:
                progress(len(ds.clips))
    return ds


# --- on-disk layout ------------------------------------------------------------
#
# directory/
#   index.txt               key=value: clips, per-clip program and pan
#   clip_0000.dmcv          encoded clip (label in the header)
#   clip_0000.f0001.flo     ground-truth flow of frame 1 (one per P-frame)

def _flow_frame_numbers(video: EncodedVideo) -> list[int]:
    gop_len = video.gop_p_count + 1
    return [g * gop_len + p + 1 for g in range(len(video.gops)) for p in range(video.gop_p_count)]


def save_clips(clips, directory) -> None:
    from pathlib import Path

    from . import container, flo
    from .manifest import write_kv

    clips = list(getattr(clips, "clips", clips))
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    index = {"clips": len(clips)}
    for i, clip in enumerate(clips):
        stem = f"clip_{i:04d}"
        container.save(root / f"{stem}.dmcv", clip.video)
        if clip.flows:
            for n, field_ in zip(_flow_frame_numbers(clip.video), clip.flows):
                flo.write_flo(root / f"{stem}.f{n:04d}.flo", field_)
        index[f"{stem}.program"] = clip.program.actors or "none"
        index[f"{stem}.pan"] = clip.program.pan
        index[f"{stem}.speed"] = clip.program.actor_speed
    write_kv(root / "index.txt", index)


def load_clips(directory) -> list[Clip]:
    """Clips written by :func:`save_clips`; flow sidecars are optional."""
    from pathlib import Path

    from . import container, flo
    from .manifest import read_kv

    root = Path(directory)
    index = read_kv(root / "index.txt") if (root / "index.txt").exists() else {}
    paths = sorted(root.glob("clip_*.dmcv"))
    if "clips" in index and int(index["clips"]) != len(paths):
        raise ValueError(f"{root}: index lists {index['clips']} clips, found {len(paths)}")
    clips = []
    for path in paths:
        video = container.load(path)
        stem = path.stem
        flow_paths = [root / f"{stem}.f{n:04d}.flo" for n in _flow_frame_numbers(video)]
        flows = [flo.read_flo(p) for p in flow_paths] if all(p.exists() for p in flow_paths) else []
        actors = index.get(f"{stem}.program", "none")
        pan = tuple(float(v) for v in index.get(f"{stem}.pan", "0,0").split(","))
        program = MotionProgram(pan=pan, actors=None if actors == "none" else actors,
                                actor_speed=float(index.get(f"{stem}.speed", 1.0)))
        clips.append(Clip(video=video, flows=flows, program=program))
    return clips
