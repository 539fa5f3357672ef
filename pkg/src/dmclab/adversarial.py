"""Discriminator, adversarial losses and the alternating update steps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .batch import Batch
from .nn import ConvPoolNet
from .optim import Adam
from .tensor import Tensor, mean_neg_log, mse_loss, scale, softmax, softmax_ce_loss, sum_scalars

REAL = 0
FAKE = 1


@dataclass(frozen=True)
class DiscriminatorConfig:
    channels: tuple[int, ...] = (16, 32, 64, 128)
    slope: float = 0.2


class Discriminator(ConvPoolNet):
    def __init__(self, config: DiscriminatorConfig | None = None, seed: int = 0,
                 dtype=np.float32):
        self.config = config or DiscriminatorConfig()
        super().__init__("disc", 2, self.config.channels, 2, self.config.slope, seed,
                         dtype=dtype)


@dataclass
class RealFakeProbs:
    p_real: np.ndarray
    p_fake: np.ndarray


def discriminator_forward(disc: Discriminator, field: Tensor):
    """Logits ``(N, 2)``, probability tensor and the split real/fake view."""
    if field.shape[1] != 2:
        raise ValueError(f"discriminator input must have 2 channels, got {field.shape[1]}")
    logits = disc(field)
    probs = softmax(logits)
    return logits, probs, RealFakeProbs(probs.data[:, REAL].copy(), probs.data[:, FAKE].copy())


def loss_adv_d(probs_on_dmc: Tensor, probs_on_flow: Tensor) -> Tensor:
    """Mean of ``-log P(fake | DMC) - log P(real | flow)``."""
    return sum_scalars([mean_neg_log(probs_on_dmc, FAKE), mean_neg_log(probs_on_flow, REAL)])


def loss_adv_g(probs_on_dmc: Tensor) -> Tensor:
    """Mean of ``-log P(real | DMC)``."""
    return mean_neg_log(probs_on_dmc, REAL)


def full_objective(l_cls, l_mse, l_adv, alpha: float, lam: float):
    """``l_cls + alpha * l_mse + lam * l_adv``; any term may be ``None``.

    Works on plain floats or on scalar tensors (keeping the tape).
    """
    if alpha < 0 or lam < 0:
        raise ValueError("alpha and lambda must be non-negative")
    terms = [(l_cls, 1.0), (l_mse, alpha), (l_adv, lam)]
    terms = [(t, w) for t, w in terms if t is not None]
    if not terms:
        raise ValueError("objective has no terms")
    if all(isinstance(t, Tensor) for t, _ in terms):
        return sum_scalars([t if w == 1.0 else scale(t, w) for t, w in terms])
    return sum(float(getattr(t, "data", t)) * w for t, w in terms)


def _tensor(arr, dtype) -> Tensor:
    return Tensor(np.asarray(arr, dtype=dtype))


def train_step_d(disc: Discriminator, gen, batch: Batch, optimizer: Adam, dmc: Tensor | None = None) -> float:
    """One discriminator update; the generator only runs inference.

    ``dmc`` may carry a generator output already computed for this batch
    with the current generator weights; it is detached here.
    """
    if batch.flow is None:
        raise ValueError("discriminator step needs flow targets")
    dtype = disc.head_weight.dtype
    if dmc is None:
        dmc = gen(_tensor(batch.mv, dtype), _tensor(batch.residual, dtype))
    dmc = dmc.detach()
    _, p_dmc, _ = discriminator_forward(disc, dmc)
    _, p_flow, _ = discriminator_forward(disc, _tensor(batch.flow, dtype))
    loss = loss_adv_d(p_dmc, p_flow)
    optimizer.zero_grad()
    loss.backward()
    optimizer.step()
    return loss.item()


def generator_losses(gen, cls, disc, batch: Batch, use_cls=True, use_mse=True, use_adv=True,
                     dmc: Tensor | None = None):
    """Forward pass for the generator-side objective; returns (dmc, {name: loss})."""
    dtype = gen.layers[0].weight.dtype
    if dmc is None:
        dmc = gen(_tensor(batch.mv, dtype), _tensor(batch.residual, dtype))
    losses = {}
    if use_cls:
        if batch.labels is None:
            raise ValueError("classification loss needs labels")
        losses["cls"] = softmax_ce_loss(cls(dmc), batch.labels)
    if use_mse:
        if batch.flow is None:
            raise ValueError("reconstruction loss needs flow targets")
        losses["mse"] = mse_loss(dmc, _tensor(batch.flow, dtype))
    if use_adv:
        _, p_dmc, _ = discriminator_forward(disc, dmc)
        losses["adv"] = loss_adv_g(p_dmc)
    return dmc, losses


def train_step_g(gen, cls, disc, batch: Batch, optimizer: Adam, alpha: float = 10.0,
                 lam: float = 1.0, use_cls=True, use_mse=True, use_adv=True,
                 dmc: Tensor | None = None) -> dict[str, float]:
    """One update of whatever ``optimizer`` holds (generator and/or classifier)
    on the full objective. Discriminator weights are never stepped.

    ``dmc`` may be a generator output (with its tape) for this batch under
    the current generator weights, e.g. the one the preceding D step used.
    """
    _, losses = generator_losses(gen, cls, disc, batch, use_cls, use_mse, use_adv, dmc)
    total = full_objective(losses.get("cls"), losses.get("mse"), losses.get("adv"), alpha, lam)
    optimizer.zero_grad()
    total.backward()
    optimizer.step()
    for module in (gen, cls, disc):
        if module is not None:
            module.zero_grad()
    out = {k: v.item() for k, v in losses.items()}
    out["total"] = total.item()
    return out
