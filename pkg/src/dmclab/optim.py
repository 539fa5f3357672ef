"""Adam with per-group learning-rate multipliers, and the plateau rule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


@dataclass
class OptimizerState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


class Adam:
    """Adam over named parameters.

    ``multipliers`` maps parameter name to a learning-rate multiplier; names
    not listed use 1.0.
    """

    def __init__(self, params: dict[str, Tensor], lr: float = 0.01,
                 betas=(0.9, 0.999), eps: float = 1e-8, multipliers=None):
        if lr < 0:
            raise ValueError("learning rate must be non-negative")
        self.params = params
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.multipliers = dict(multipliers or {})
        self.state = OptimizerState()

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        grads = {name: p.grad for name, p in self.params.items()}
        arrays = {name: p.data for name, p in self.params.items()}
        adam_step(arrays, grads, self.state, self.lr, self.betas, self.eps, self.multipliers)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray | None],
              state: OptimizerState, lr: float, betas=(0.9, 0.999), eps: float = 1e-8,
              multipliers=None) -> None:
    """One in-place bias-corrected Adam update.

    Parameters with a ``None`` gradient are treated as having zero gradient.
    """
    if lr < 0:
        raise ValueError("learning rate must be non-negative")
    multipliers = multipliers or {}
    b1, b2 = betas
    state.step += 1
    t = state.step
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {name} {p.shape}")
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        step = lr * multipliers.get(name, 1.0)
        p -= (step * (m / c1) / (np.sqrt(v / c2) + eps)).astype(p.dtype)


def plateau_lr(base_lr: float, history, patience: int = 3, min_delta: float = 1e-4,
               factor: float = 0.1, floor: float = 1e-5) -> float:
    """Learning rate after the given per-epoch loss history.

    An epoch improves when its loss beats the best so far by more than
    ``min_delta``. After ``patience`` consecutive non-improving epochs the
    rate is multiplied by ``factor`` (never below ``floor``) and the count
    restarts.
    """
    lr = base_lr
    best = np.inf
    stale = 0
    for loss in history:
        if loss < best - min_delta:
            best = loss
            stale = 0
        else:
            stale += 1
            if stale >= patience:
                lr = max(lr * factor, floor)
                stale = 0
    return lr
