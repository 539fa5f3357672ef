"""Layer containers shared by the generator, discriminator and classifiers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import SplitMix64, fan_in_uniform
from .tensor import Tensor, conv2d, global_avg_pool, leaky_relu, linear


@dataclass
class ConvLayer:
    weight: Tensor
    bias: Tensor
    stride: int = 1
    padding: int = 1

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    @property
    def kernel(self) -> tuple[int, int]:
        return self.weight.shape[2], self.weight.shape[3]

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, self.stride, self.padding)


def make_conv(rng: SplitMix64, c_in: int, c_out: int, k: int = 3, stride: int = 1,
              padding: int = 1, zero: bool = False, dtype=np.float32) -> ConvLayer:
    shape = (c_out, c_in, k, k)
    w = np.zeros(shape, dtype) if zero else fan_in_uniform(rng, shape, dtype)
    return ConvLayer(Tensor(w, requires_grad=True),
                     Tensor(np.zeros(c_out, dtype), requires_grad=True), stride, padding)


class Module:
    """Anything exposing named parameters via ``parameters()``."""

    def parameters(self) -> dict[str, Tensor]:
        raise NotImplementedError

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for name, p in self.parameters().items():
            if name not in state:
                raise KeyError(f"checkpoint has no tensor {name!r}")
            if state[name].shape != p.shape:
                raise ValueError(f"{name}: checkpoint shape {state[name].shape} != {p.shape}")
            p.data = state[name].astype(p.data.dtype).copy()

    def zero_grad(self) -> None:
        for p in self.parameters().values():
            p.grad = None


class ConvPoolNet(Module):
    """Strided 3x3 conv blocks with leaky rectifiers, global average pool,
    then a fully connected head."""

    def __init__(self, prefix: str, in_channels: int, channels, num_outputs: int,
                 slope: float, seed: int, stride: int = 2, dtype=np.float32):
        self.prefix = prefix
        self.in_channels = in_channels
        self.slope = slope
        rng = SplitMix64(seed).fork(prefix)
        self.convs = []
        c = in_channels
        for co in channels:
            self.convs.append(make_conv(rng, c, co, 3, stride, 1, dtype=dtype))
            c = co
        self.head_weight = Tensor(fan_in_uniform(rng, (num_outputs, c), dtype), requires_grad=True)
        self.head_bias = Tensor(np.zeros(num_outputs, dtype), requires_grad=True)

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        for k, layer in enumerate(self.convs):
            out[f"{self.prefix}.conv{k}.weight"] = layer.weight
            out[f"{self.prefix}.conv{k}.bias"] = layer.bias
        out[f"{self.prefix}.fc.weight"] = self.head_weight
        out[f"{self.prefix}.fc.bias"] = self.head_bias
        return out

    def head_names(self) -> set[str]:
        return {f"{self.prefix}.fc.weight", f"{self.prefix}.fc.bias"}

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[1] != self.in_channels:
            raise ValueError(f"{self.prefix} expects {self.in_channels} channels, got {x.shape[1]}")
        for layer in self.convs:
            x = leaky_relu(layer(x), self.slope)
        return linear(global_avg_pool(x), self.head_weight, self.head_bias)
