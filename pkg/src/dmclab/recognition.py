"""Per-stream classifiers and late fusion of their scores."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import ConvPoolNet
from .tensor import Tensor, softmax_ce_loss, softmax_np, subtract_spatial_mean

STREAMS = ("I", "MV", "R", "DMC")
STREAM_CHANNELS = {"I": 3, "MV": 2, "R": 3, "DMC": 2}
MOTION_STREAMS = ("MV", "DMC")


@dataclass(frozen=True)
class ClassifierConfig:
    in_channels: int
    num_classes: int
    channels: tuple[int, ...] = (16, 32, 64, 128)
    slope: float = 0.1
    center_input: bool = False


class Classifier(ConvPoolNet):
    """Small stand-in backbone: strided conv blocks, average pool, K-way head.

    Parameter names are ``cls.<stream>.*``. With ``center_input`` each
    input channel has its per-frame spatial mean removed first, the usual
    mean-displacement subtraction of motion streams that cancels global
    camera motion.
    """

    def __init__(self, config: ClassifierConfig, stream: str = "DMC", seed: int = 0,
                 dtype=np.float32):
        if stream not in STREAMS:
            raise ValueError(f"unknown stream {stream!r}")
        self.config = config
        self.stream = stream
        super().__init__(f"cls.{stream}", config.in_channels, config.channels,
                         config.num_classes, config.slope, seed, dtype=dtype)

    def body_names(self) -> set[str]:
        return set(self.parameters()) - self.head_names()

    def __call__(self, x: Tensor) -> Tensor:
        if self.config.center_input:
            x = subtract_spatial_mean(x)
        return super().__call__(x)


def build_classifier(stream: str, num_classes: int, seed: int = 0, dtype=np.float32) -> Classifier:
    cfg = ClassifierConfig(STREAM_CHANNELS[stream], num_classes,
                           center_input=stream in MOTION_STREAMS)
    return Classifier(cfg, stream, seed, dtype)


def classifier_forward(cls: Classifier, x: Tensor) -> Tensor:
    return cls(x)


def loss_cls(logits: Tensor, labels) -> Tensor:
    return softmax_ce_loss(logits, labels)


@dataclass
class StreamPrediction:
    stream: str
    scores: np.ndarray


def predict_scores(cls: Classifier, x: Tensor) -> np.ndarray:
    return softmax_np(cls(x).data.astype(np.float64))


def fuse_scores(predictions, weights=None) -> np.ndarray:
    """Weighted mean of per-stream probability vectors, renormalized."""
    predictions = list(predictions)
    if not predictions:
        raise ValueError("nothing to fuse")
    if weights is None:
        weights = [1.0] * len(predictions)
    elif isinstance(weights, dict):
        weights = [weights.get(p.stream, 1.0) for p in predictions]
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (len(predictions),):
        raise ValueError("one weight per stream is required")
    if np.any(weights < 0) or not np.any(weights > 0):
        raise ValueError("fusion weights must be non-negative and not all zero")
    k = len(predictions[0].scores)
    if any(len(p.scores) != k for p in predictions):
        raise ValueError("score vectors differ in length")
    fused = sum(w * np.asarray(p.scores, dtype=np.float64) for w, p in zip(weights, predictions))
    fused = fused / weights.sum()
    return fused / fused.sum()


def top1_accuracy(scores, labels) -> float:
    """Fraction of rows whose argmax equals the label; ties go to the lowest index."""
    scores = np.asarray(scores)
    labels = np.asarray(labels)
    if len(labels) == 0:
        return 0.0
    return float(np.mean(np.argmax(scores, axis=1) == labels))
