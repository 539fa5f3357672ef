"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor, record_kinks


@dataclass
class GradCheckReport:
    tolerance: float
    errors: dict[str, float] = field(default_factory=dict)
    checked: int = 0
    skipped: int = 0

    @property
    def max_rel_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        worst = ", ".join(f"{k}={v:.2e}" for k, v in self.errors.items())
        return (f"{status} max_rel={self.max_rel_error:.3e} tol={self.tolerance:g} "
                f"checked={self.checked} skipped={self.skipped} [{worst}]")


def relative_error(analytic, numeric, floor: float = 1e-6):
    """Elementwise ``|a - n| / max(|a|, |n|, floor)``."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def grad_check(fn, inputs: dict[str, Tensor], tolerance: float = 1e-4, eps: float = 1e-5,
               max_checks: int | None = None, seed: int = 0,
               skip_kinks: bool = False) -> GradCheckReport:
    """Compare the gradients of scalar ``fn(**inputs)`` with central differences.

    ``inputs`` should hold float64 tensors; each gets ``requires_grad`` set.
    With ``max_checks`` only that many randomly chosen coordinates per input
    are perturbed.

    With ``skip_kinks`` a coordinate is skipped (and counted in
    ``report.skipped``) when moving it from ``x - eps`` to ``x + eps`` flips
    the sign of any leaky-rectifier input: the difference quotient then
    straddles a kink and says nothing about the derivative at ``x``.
    """
    for t in inputs.values():
        t.data = np.ascontiguousarray(t.data)
        t.requires_grad = True
        t.grad = None
    out = fn(**inputs)
    out.backward()
    analytic = {k: (np.zeros_like(t.data) if t.grad is None else t.grad.copy())
                for k, t in inputs.items()}

    def value():
        with record_kinks() as masks:
            v = float(fn(**inputs).data)
        return v, masks

    rng = np.random.default_rng(seed)
    report = GradCheckReport(tolerance=tolerance)
    for name, t in inputs.items():
        flat = t.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_checks is not None and flat.size > max_checks:
            idx = rng.choice(flat.size, max_checks, replace=False)
        numeric = np.empty(len(idx))
        keep = np.ones(len(idx), dtype=bool)
        for j, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + eps
            up, masks_up = value()
            flat[i] = orig - eps
            down, masks_down = value()
            flat[i] = orig
            if skip_kinks and any(not np.array_equal(a, b) for a, b in zip(masks_up, masks_down)):
                keep[j] = False
            numeric[j] = (up - down) / (2 * eps)
        err = relative_error(analytic[name].reshape(-1)[idx][keep], numeric[keep])
        report.errors[name] = float(err.max(initial=0.0))
        report.checked += int(keep.sum())
        report.skipped += int((~keep).sum())
    return report


# --- the op suite ------------------------------------------------------------
#
# Each case builds a scalar function of float64 tensors from a seed. Ops with
# non-scalar output are reduced through ``mse_loss`` against a fixed random
# target. Leaky-rectifier inputs are kept away from the kink at zero so the
# central difference never straddles it.

def _rand(rng, *shape, low=-1.0, high=1.0):
    return Tensor(rng.uniform(low, high, shape))


def _away_from_zero(rng, *shape, margin=0.1):
    mag = rng.uniform(margin, 1.0, shape)
    return Tensor(np.where(rng.random(shape) < 0.5, -mag, mag))


def _project(out: Tensor, rng) -> Tensor:
    from .tensor import mse_loss
    return mse_loss(out, Tensor(rng.standard_normal(out.shape)))


def _case_conv(stride, padding, k):
    def build(seed):
        from .tensor import conv2d
        rng = np.random.default_rng(seed)
        n, c, o = int(rng.integers(1, 3)), int(rng.integers(1, 4)), int(rng.integers(1, 4))
        h, w = int(rng.integers(k, 8)), int(rng.integers(k, 8))
        target = np.random.default_rng(seed + 1)
        shape_out = None

        def fn(x, weight, bias):
            nonlocal shape_out
            out = conv2d(x, weight, bias, stride, padding)
            if shape_out is None:
                shape_out = target.standard_normal(out.shape)
            from .tensor import mse_loss
            return mse_loss(out, Tensor(shape_out))

        return fn, {"x": _rand(rng, n, c, h, w), "weight": _rand(rng, o, c, k, k),
                    "bias": _rand(rng, o)}
    return build


def _with_target(op, make_inputs):
    """Case whose scalar is ``mse(op(**inputs), fixed_target)``."""
    def build(seed):
        from .tensor import mse_loss
        rng = np.random.default_rng(seed)
        inputs = make_inputs(rng)
        target = Tensor(np.random.default_rng(seed + 1).standard_normal(op(**inputs).shape))
        return (lambda **kw: mse_loss(op(**kw), target)), inputs
    return build


def _case_leaky(slope):
    from .tensor import leaky_relu
    return _with_target(lambda x: leaky_relu(x, slope),
                        lambda rng: {"x": _away_from_zero(rng, 2, 3, 4, 5)})


def _case_concat():
    from .tensor import concat_channels
    return _with_target(lambda a, b, c: concat_channels(a, b, c),
                        lambda rng: {"a": _rand(rng, 2, 1, 3, 4), "b": _rand(rng, 2, 2, 3, 4),
                                     "c": _rand(rng, 2, 3, 3, 4)})


def _case_split():
    from .tensor import concat_channels, scale, split_channels

    def op(x):
        a, b, c = split_channels(x, [1, 3, 2])
        # weight the pieces differently so a mix-up would show
        return concat_channels(scale(c, 2.0), a, scale(b, -0.5))
    return _with_target(op, lambda rng: {"x": _rand(rng, 2, 6, 3, 3)})


def _case_add():
    from .tensor import add
    return _with_target(lambda a, b: add(a, b),
                        lambda rng: {"a": _rand(rng, 2, 3, 4, 4), "b": _rand(rng, 2, 3, 4, 4)})


def _case_scale():
    from .tensor import scale
    return _with_target(lambda a: scale(a, -1.7), lambda rng: {"a": _rand(rng, 3, 2, 3, 3)})


def _case_sum_scalars():
    def build(seed):
        from .tensor import mse_loss, sum_scalars
        rng = np.random.default_rng(seed)
        t1, t2 = Tensor(rng.standard_normal((2, 3))), Tensor(rng.standard_normal((4,)))
        return (lambda a, b: sum_scalars([mse_loss(a, t1), mse_loss(b, t2)])), \
            {"a": _rand(rng, 2, 3), "b": _rand(rng, 4)}
    return build


def _case_pool():
    from .tensor import global_avg_pool
    return _with_target(global_avg_pool, lambda rng: {"x": _rand(rng, 2, 3, 4, 5)})


def _case_center():
    from .tensor import subtract_spatial_mean
    return _with_target(subtract_spatial_mean, lambda rng: {"x": _rand(rng, 2, 2, 4, 5)})


def _case_linear():
    from .tensor import linear
    return _with_target(lambda x, weight, bias: linear(x, weight, bias),
                        lambda rng: {"x": _rand(rng, 3, 5), "weight": _rand(rng, 4, 5),
                                     "bias": _rand(rng, 4)})


def _case_softmax():
    from .tensor import softmax
    return _with_target(softmax, lambda rng: {"logits": _rand(rng, 4, 5, low=-3, high=3)})


def _case_mse():
    def build(seed):
        from .tensor import mse_loss
        rng = np.random.default_rng(seed)
        return (lambda pred, target: mse_loss(pred, target)), \
            {"pred": _rand(rng, 2, 2, 3, 3), "target": _rand(rng, 2, 2, 3, 3)}
    return build


def _case_ce():
    def build(seed):
        from .tensor import softmax_ce_loss
        rng = np.random.default_rng(seed)
        labels = rng.integers(0, 5, 6)
        return (lambda logits: softmax_ce_loss(logits, labels)), \
            {"logits": _rand(rng, 6, 5, low=-3, high=3)}
    return build


def _case_neg_log(column):
    def build(seed):
        from .tensor import mean_neg_log
        rng = np.random.default_rng(seed)
        return (lambda probs: mean_neg_log(probs, column)), \
            {"probs": _rand(rng, 5, 2, low=0.05, high=1.0)}
    return build


def _case_generator():
    """Full generator + reconstruction loss on 1x5x16x16 input; the zero-init
    last layer is randomized, otherwise no gradient reaches earlier layers."""
    def build(seed):
        from .generator import build_generator
        from .tensor import mse_loss
        rng = np.random.default_rng(seed)
        gen = build_generator(seed=seed, dtype=np.float64)
        last = gen.layers[-1].weight
        last.data = rng.uniform(-0.3, 0.3, last.shape)
        for layer in gen.layers:
            layer.bias.data = rng.uniform(-0.1, 0.1, layer.bias.shape)
        params = gen.parameters()
        flow = Tensor(rng.uniform(-2, 2, (1, 2, 16, 16)))

        def fn(mv, residual, **weights):
            return mse_loss(gen(mv, residual), flow)

        inputs = {"mv": _rand(rng, 1, 2, 16, 16, low=-3, high=3), "residual": _rand(rng, 1, 3, 16, 16)}
        inputs.update(params)
        return fn, inputs
    return build


def _case_discriminator(which):
    def build(seed):
        from .adversarial import Discriminator, discriminator_forward, loss_adv_d, loss_adv_g
        rng = np.random.default_rng(seed)
        disc = Discriminator(seed=seed, dtype=np.float64)
        for layer in disc.convs:
            layer.bias.data = rng.uniform(-0.1, 0.1, layer.bias.shape)

        def fn(dmc, flow, **weights):
            _, p_dmc, _ = discriminator_forward(disc, dmc)
            if which == "g":
                return loss_adv_g(p_dmc)
            _, p_flow, _ = discriminator_forward(disc, flow)
            return loss_adv_d(p_dmc, p_flow)

        inputs = {"dmc": _rand(rng, 2, 2, 16, 16, low=-2, high=2),
                  "flow": _rand(rng, 2, 2, 16, 16, low=-2, high=2)}
        inputs.update(disc.parameters())
        return fn, inputs
    return build


def _case_classifier():
    def build(seed):
        from .recognition import build_classifier, loss_cls
        rng = np.random.default_rng(seed)
        cls = build_classifier("DMC", 5, seed=seed, dtype=np.float64)
        labels = rng.integers(0, 5, 3)

        def fn(x, **weights):
            return loss_cls(cls(x), labels)

        inputs = {"x": _rand(rng, 3, 2, 16, 16, low=-2, high=2)}
        inputs.update(cls.parameters())
        return fn, inputs
    return build


# name -> (builder, max_checks per input or None for all, skip kink crossings)
SUITE = {
    "conv2d": (_case_conv(1, 1, 3), None, False),
    "conv2d_stride2": (_case_conv(2, 1, 3), None, False),
    "conv2d_1x1_nopad": (_case_conv(1, 0, 1), None, False),
    "leaky_relu_0.1": (_case_leaky(0.1), None, False),
    "leaky_relu_0.2": (_case_leaky(0.2), None, False),
    "concat_channels": (_case_concat(), None, False),
    "split_channels": (_case_split(), None, False),
    "add": (_case_add(), None, False),
    "scale": (_case_scale(), None, False),
    "sum_scalars": (_case_sum_scalars(), None, False),
    "global_avg_pool": (_case_pool(), None, False),
    "subtract_spatial_mean": (_case_center(), None, False),
    "linear": (_case_linear(), None, False),
    "softmax": (_case_softmax(), None, False),
    "mse_loss": (_case_mse(), None, False),
    "softmax_ce_loss": (_case_ce(), None, False),
    "mean_neg_log_real": (_case_neg_log(0), None, False),
    "mean_neg_log_fake": (_case_neg_log(1), None, False),
    "generator+mse": (_case_generator(), 12, True),
    "discriminator+adv_d": (_case_discriminator("d"), 12, True),
    "discriminator+adv_g": (_case_discriminator("g"), 12, True),
    "classifier+ce": (_case_classifier(), 12, True),
}


def check_case(name: str, seed: int, tolerance: float = 1e-4, eps: float = 1e-5) -> GradCheckReport:
    build, max_checks, skip_kinks = SUITE[name]
    fn, inputs = build(seed)
    return grad_check(fn, inputs, tolerance, eps, max_checks=max_checks, seed=seed,
                      skip_kinks=skip_kinks)


def run_suite(seeds=range(20), names=None, tolerance: float = 1e-4,
              eps: float = 1e-5) -> dict[str, GradCheckReport]:
    """Worst report per case over all seeds."""
    out = {}
    for name in names or SUITE:
        merged = GradCheckReport(tolerance=tolerance)
        for seed in seeds:
            rep = check_case(name, seed, tolerance, eps)
            merged.checked += rep.checked
            merged.skipped += rep.skipped
            for k, v in rep.errors.items():
                merged.errors[k] = max(merged.errors.get(k, 0.0), v)
        out[name] = merged
    return out
