import numpy as np
import pytest

from dmclab.recognition import (STREAM_CHANNELS, StreamPrediction, build_classifier, fuse_scores,
                                loss_cls, predict_scores, top1_accuracy)
from dmclab.tensor import Tensor


@pytest.mark.parametrize("stream", ["I", "MV", "R", "DMC"])
def test_classifier_shapes(stream):
    cls = build_classifier(stream, 8)
    assert cls.in_channels == STREAM_CHANNELS[stream]
    assert [c.out_channels for c in cls.convs] == [16, 32, 64, 128]
    assert cls.slope == 0.1
    x = Tensor(np.zeros((3, STREAM_CHANNELS[stream], 64, 64), np.float32))
    assert cls(x).shape == (3, 8)
    assert all(name.startswith(f"cls.{stream}.") for name in cls.parameters())
    assert cls.body_names() | cls.head_names() == set(cls.parameters())
    assert not cls.body_names() & cls.head_names()


def test_unknown_stream_rejected():
    with pytest.raises(KeyError):
        build_classifier("OF", 8)


def test_wrong_channel_count_rejected():
    with pytest.raises(ValueError):
        build_classifier("MV", 4)(Tensor(np.zeros((1, 3, 32, 32))))


def test_predict_scores_are_distributions():
    rng = np.random.default_rng(0)
    s = predict_scores(build_classifier("R", 6), Tensor(rng.normal(size=(4, 3, 32, 32)).astype(np.float32)))
    assert s.shape == (4, 6) and np.allclose(s.sum(axis=1), 1.0)


def test_loss_cls_is_cross_entropy():
    logits = Tensor(np.zeros((2, 4)))
    assert loss_cls(logits, [0, 3]).item() == pytest.approx(np.log(4))


def test_single_stream_fusion_is_identity():
    p = np.array([0.1, 0.6, 0.3])
    np.testing.assert_allclose(fuse_scores([StreamPrediction("R", p)]), p)


def test_fusion_weighted_mean():
    a = StreamPrediction("I", np.array([1.0, 0.0]))
    b = StreamPrediction("DMC", np.array([0.0, 1.0]))
    np.testing.assert_allclose(fuse_scores([a, b]), [0.5, 0.5])
    np.testing.assert_allclose(fuse_scores([a, b], [3, 1]), [0.75, 0.25])
    np.testing.assert_allclose(fuse_scores([a, b], {"DMC": 3}), [0.25, 0.75])
    with pytest.raises(ValueError):
        fuse_scores([a, b], [1, 2, 3])
    with pytest.raises(ValueError):
        fuse_scores([a, b], [0, 0])
    with pytest.raises(ValueError):
        fuse_scores([])
    with pytest.raises(ValueError):
        fuse_scores([a, StreamPrediction("R", np.ones(3) / 3)])


def test_top1_accuracy_and_ties():
    scores = np.array([[0.5, 0.5], [0.2, 0.8], [0.9, 0.1]])
    assert top1_accuracy(scores, [0, 1, 1]) == pytest.approx(2 / 3)
    assert top1_accuracy(np.zeros((0, 2)), []) == 0.0


def test_random_predictions_sit_at_chance():
    rng = np.random.default_rng(0)
    scores = rng.random((10000, 8))
    labels = rng.integers(0, 8, 10000)
    assert abs(top1_accuracy(scores, labels) - 0.125) <= 0.02
