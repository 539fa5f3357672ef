"""Video-level inference, evaluation and end-point error."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .codec import EncodedVideo, expand_mv
from .recognition import StreamPrediction, fuse_scores, predict_scores, top1_accuracy
from .tensor import Tensor
from .training import Models, iframe_input, residual_input

FRAMES_PER_VIDEO = 25


def sample_indices(available: int, count: int = FRAMES_PER_VIDEO) -> np.ndarray:
    """Centres of ``count`` equal segments over ``available`` frames.

    Index ``i`` is ``floor((i + 0.5) * available / count)``; with fewer
    frames than ``count`` indices repeat.
    """
    if available < 1:
        raise ValueError("no frames to sample")
    i = np.arange(count)
    return np.floor((i + 0.5) * available / count).astype(np.int64)


def end_point_error(a: np.ndarray, b: np.ndarray) -> float:
    """Mean Euclidean norm of the per-pixel difference of two (..., 2, H, W) fields."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"flow shapes differ: {a.shape} vs {b.shape}")
    d = a - b
    return float(np.sqrt(d[..., 0, :, :] ** 2 + d[..., 1, :, :] ** 2).mean())


def generate_dmc(models: Models, ev: EncodedVideo, indices=None, batch: int = 32) -> np.ndarray:
    mvs = ev.motion_vectors()
    res = ev.residuals()
    if indices is None:
        indices = range(len(mvs))
    indices = list(indices)
    out = []
    dtype = models.generator.layers[0].weight.dtype
    for s in range(0, len(indices), batch):
        chunk = indices[s:s + batch]
        mv = np.stack([expand_mv(mvs[i]) for i in chunk]).astype(dtype)
        r = np.stack([residual_input(res[i]) for i in chunk]).astype(dtype)
        out.append(models.generator(Tensor(mv), Tensor(r)).data)
    return np.concatenate(out)


def stream_frames(ev: EncodedVideo, stream: str, models: Models, frames_per_video: int) -> np.ndarray:
    if stream == "I":
        frames = ev.iframes()
        idx = sample_indices(len(frames), frames_per_video)
        return np.stack([iframe_input(frames[i]) for i in idx])
    mvs = ev.motion_vectors()
    idx = sample_indices(len(mvs), frames_per_video)
    if stream == "MV":
        return np.stack([expand_mv(mvs[i]) for i in idx])
    if stream == "R":
        res = ev.residuals()
        return np.stack([residual_input(res[i]) for i in idx])
    if stream == "DMC":
        unique, inverse = np.unique(idx, return_inverse=True)
        return generate_dmc(models, ev, unique)[inverse]
    raise ValueError(f"unknown stream {stream!r}")


def stream_predictions(models: Models, ev: EncodedVideo, streams,
                       frames_per_video: int = FRAMES_PER_VIDEO) -> dict[str, StreamPrediction]:
    out = {}
    for stream in streams:
        if stream not in models.classifiers:
            raise KeyError(f"no checkpoint for stream {stream!r}")
        x = stream_frames(ev, stream, models, frames_per_video)
        scores = predict_scores(models.classifiers[stream], Tensor(x)).mean(axis=0)
        out[stream] = StreamPrediction(stream, scores / scores.sum())
    return out


def infer_video(models: Models, ev: EncodedVideo, streams=("I", "MV", "R", "DMC"),
                frames_per_video: int = FRAMES_PER_VIDEO, weights=None) -> np.ndarray:
    """Fused class scores for one video."""
    preds = stream_predictions(models, ev, streams, frames_per_video)
    return fuse_scores([preds[s] for s in streams], weights)


FUSIONS = {
    "I+MV+R": ("I", "MV", "R"),
    "I+R+DMC": ("I", "R", "DMC"),
    "I+R+MV": ("I", "R", "MV"),
    "I+MV+R+DMC": ("I", "MV", "R", "DMC"),
}


@dataclass
class EvalReport:
    stream_accuracy: dict[str, float] = field(default_factory=dict)
    fused_accuracy: dict[str, float] = field(default_factory=dict)
    epe_dmc: float = float("nan")
    epe_mv: float = float("nan")
    epe_by_program: dict[str, tuple[float, float]] = field(default_factory=dict)
    num_videos: int = 0

    def as_dict(self) -> dict:
        out = {"videos": self.num_videos, "epe.dmc": self.epe_dmc, "epe.mv": self.epe_mv}
        for k, v in self.stream_accuracy.items():
            out[f"top1.stream.{k}"] = v
        for k, v in self.fused_accuracy.items():
            out[f"top1.fused.{k}"] = v
        for k, (d, m) in self.epe_by_program.items():
            out[f"epe.dmc.{k}"] = d
            out[f"epe.mv.{k}"] = m
        return out

    def lines(self) -> list[str]:
        return [f"{k} {v:.6f}" if isinstance(v, float) else f"{k} {v}" for k, v in self.as_dict().items()]


def evaluate(models: Models, clips, fusions=None, frames_per_video: int = FRAMES_PER_VIDEO,
             weights=None) -> EvalReport:
    """Per-stream and fused top-1, plus mean EPE of DMC and expanded MV
    against ground-truth flow where clips carry it."""
    clips = list(getattr(clips, "clips", clips))
    if not clips:
        raise ValueError("test set is empty")
    fusions = fusions or FUSIONS
    streams = [s for s in ("I", "MV", "R", "DMC") if s in models.classifiers]
    labels = np.array([c.label for c in clips])
    per_stream = {s: [] for s in streams}
    epe = {"dmc": [], "mv": []}
    by_prog: dict[str, dict[str, list]] = {}
    for clip in clips:
        preds = stream_predictions(models, clip.video, streams, frames_per_video)
        for s in streams:
            per_stream[s].append(preds[s].scores)
        if clip.flows:
            dmc = generate_dmc(models, clip.video)
            mv = np.stack([expand_mv(m) for m in clip.video.motion_vectors()])
            gt = np.stack(clip.flows)
            e_d, e_m = end_point_error(dmc, gt), end_point_error(mv, gt)
            epe["dmc"].append(e_d)
            epe["mv"].append(e_m)
            prog = getattr(clip.program, "actors", None) or "none"
            slot = by_prog.setdefault(prog, {"dmc": [], "mv": []})
            slot["dmc"].append(e_d)
            slot["mv"].append(e_m)

    report = EvalReport(num_videos=len(clips))
    for s in streams:
        report.stream_accuracy[s] = top1_accuracy(np.array(per_stream[s]), labels)
    for name, members in fusions.items():
        if not all(m in per_stream for m in members):
            continue
        fused = [fuse_scores([StreamPrediction(m, per_stream[m][i]) for m in members], weights)
                 for i in range(len(clips))]
        report.fused_accuracy[name] = top1_accuracy(np.array(fused), labels)
    if epe["dmc"]:
        report.epe_dmc = float(np.mean(epe["dmc"]))
        report.epe_mv = float(np.mean(epe["mv"]))
        report.epe_by_program = {k: (float(np.mean(v["dmc"])), float(np.mean(v["mv"])))
                                 for k, v in sorted(by_prog.items())}
    return report
