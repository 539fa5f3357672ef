"""The DMC generator: a six-layer densely connected 3x3 conv stack that
refines the dense motion-vector field using the residual.

Each layer sees the raw 5-channel input (2 MV + 3 residual) concatenated
with the outputs of all earlier layers. A leaky rectifier (slope 0.1)
follows every layer except the last, whose 2-channel output is added to the
input MV through a shortcut.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import ConvLayer, Module, make_conv
from .rng import SplitMix64
from .tensor import Tensor, add, concat_channels, leaky_relu

LAYER_OUT_CHANNELS = (8, 8, 6, 4, 2, 2)
INPUT_CHANNELS = 5
MV_CHANNELS = 2
RESIDUAL_SCALE = 255.0


@dataclass(frozen=True)
class GeneratorConfig:
    layer_out_channels: tuple[int, ...] = LAYER_OUT_CHANNELS
    kernel: int = 3
    stride: int = 1
    padding: int = 1
    slope: float = 0.1
    shortcut: bool = True

    def __post_init__(self):
        if self.layer_out_channels[-1] != MV_CHANNELS:
            raise ValueError("the last generator layer must output 2 channels")

    @property
    def in_channels(self) -> list[int]:
        out = []
        c = INPUT_CHANNELS
        for co in self.layer_out_channels:
            out.append(c)
            c += co
        return out


class Generator(Module):
    prefix = "gen"

    def __init__(self, config: GeneratorConfig, layers: list[ConvLayer]):
        self.config = config
        self.layers = layers
        expected = config.in_channels
        for k, layer in enumerate(layers):
            if layer.in_channels != expected[k]:
                raise ValueError(
                    f"conv{k} has {layer.in_channels} input channels, dense connectivity needs {expected[k]}")

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        for k, layer in enumerate(self.layers):
            out[f"{self.prefix}.conv{k}.weight"] = layer.weight
            out[f"{self.prefix}.conv{k}.bias"] = layer.bias
        return out

    def __call__(self, mv_dense: Tensor, residual: Tensor) -> Tensor:
        return self.forward(mv_dense, residual)

    def forward(self, mv_dense: Tensor, residual: Tensor) -> Tensor:
        """DMC field ``(N, 2, H, W)`` from dense MV (pixels) and residual in [-1, 1]."""
        if mv_dense.shape[1] != MV_CHANNELS or residual.shape[1] != 3:
            raise ValueError("generator expects a 2-channel MV and a 3-channel residual")
        if mv_dense.shape[0] != residual.shape[0] or mv_dense.shape[2:] != residual.shape[2:]:
            raise ValueError(f"MV {mv_dense.shape} and residual {residual.shape} differ in size")
        feats = concat_channels(mv_dense, residual)
        last = len(self.layers) - 1
        for k, layer in enumerate(self.layers):
            y = layer(feats)
            if k == last:
                return add(y, mv_dense) if self.config.shortcut else y
            y = leaky_relu(y, self.config.slope)
            feats = concat_channels(feats, y)
        raise AssertionError("unreachable")


def build_generator(config: GeneratorConfig | None = None, seed: int = 0,
                    dtype=np.float32) -> Generator:
    """Fan-in uniform init for conv0..conv4; conv5 starts at zero so DMC == MV."""
    config = config or GeneratorConfig()
    rng = SplitMix64(seed).fork("generator")
    layers = []
    last = len(config.layer_out_channels) - 1
    for k, (ci, co) in enumerate(zip(config.in_channels, config.layer_out_channels)):
        layers.append(make_conv(rng, ci, co, config.kernel, config.stride, config.padding,
                                zero=(k == last), dtype=dtype))
    return Generator(config, layers)


def count_macs(config: GeneratorConfig | None = None, height: int = 224, width: int = 224,
               per_layer: bool = False):
    """Multiply-accumulates of one forward pass (1 MAC counted as 1 FLOP).

    Bias additions and activations are not counted.
    """
    config = config or GeneratorConfig()
    if height < 1 or width < 1:
        raise ValueError("height and width must be at least 1")
    k2 = config.kernel * config.kernel
    layers = []
    h, w = height, width
    for ci, co in zip(config.in_channels, config.layer_out_channels):
        h = (h + 2 * config.padding - config.kernel) // config.stride + 1
        w = (w + 2 * config.padding - config.kernel) // config.stride + 1
        layers.append(k2 * ci * co * h * w)
    return layers if per_layer else sum(layers)


def prepare_inputs(mv_dense: np.ndarray, residual: np.ndarray, dtype=np.float32):
    """Network tensors from codec arrays: MV stays in pixels, residual / 255."""
    mv = np.asarray(mv_dense, dtype=dtype)
    res = np.asarray(residual, dtype=dtype) / dtype(RESIDUAL_SCALE)
    if mv.ndim == 3:
        mv, res = mv[None], res[None]
    return Tensor(mv), Tensor(res)
