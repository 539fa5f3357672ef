"""A small tape-based autodiff engine over numpy arrays.

Only the operations the DMC networks need are provided. Each op is exposed
twice: as plain numpy ``*_forward``/``*_backward`` functions (tested directly
against naive oracles) and as a :class:`Tensor`-level function that records
itself on the tape.

Convolutions use im2col with columns ordered (input channel, kernel row,
kernel column), so every output value is reduced in that fixed order.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

DEFAULT_DTYPE = np.float32
LOG_FLOOR = 1e-12

_debug = False


@contextmanager
def debug_mode(enabled: bool = True):
    """Check every forward and backward result for NaN/Inf while active."""
    global _debug
    prev, _debug = _debug, enabled
    try:
        yield
    finally:
        _debug = prev


_kink_log: list | None = None


@contextmanager
def record_kinks():
    """Collect the sign mask of every leaky-rectifier input evaluated while
    active (used by the gradient checker to spot perturbations that cross a
    kink)."""
    global _kink_log
    prev, _kink_log = _kink_log, []
    try:
        yield _kink_log
    finally:
        _kink_log = prev


class NumericError(FloatingPointError):
    pass


def _check_finite(arr: np.ndarray, what: str) -> None:
    if _debug and not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {what}")


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None,
                 _parents: tuple = (), _backward=None):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self, grad=None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))

        grads = {id(self): np.asarray(grad, dtype=self.data.dtype)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            _check_finite(g, "gradient")
            if node._backward is None:
                if node.requires_grad:
                    node._accumulate(g)
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not _needs_grad(parent):
                    continue
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + pg
                else:
                    grads[id(parent)] = pg

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return scale(self, other)

    __rmul__ = __mul__


def _needs_grad(t: Tensor) -> bool:
    return t.requires_grad or t._backward is not None


def _make(data, parents, backward) -> Tensor:
    _check_finite(data, "forward output")
    if any(_needs_grad(p) for p in parents):
        return Tensor(data, _parents=tuple(parents), _backward=backward)
    return Tensor(data)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# --- convolution ---------------------------------------------------------

def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, padding: int):
    """Channel-major columns: rows ordered (c, kh, kw), columns (n, ho, wo)."""
    n, c, h, w = x.shape
    ho = conv_output_size(h, kh, stride, padding)
    wo = conv_output_size(w, kw, stride, padding)
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x
    xp = xp.transpose(1, 0, 2, 3)
    cols = np.empty((c, kh, kw, n, ho, wo), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, i, j] = xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride]
    return cols.reshape(c * kh * kw, n * ho * wo), ho, wo


def _col2im(dcols: np.ndarray, x_shape, kh, kw, stride, padding, ho, wo):
    n, c, h, w = x_shape
    d = dcols.reshape(c, kh, kw, n, ho, wo)
    dxp = np.zeros((c, n, h + 2 * padding, w + 2 * padding), dtype=dcols.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += d[:, i, j]
    dx = dxp[:, :, padding:padding + h, padding:padding + w].transpose(1, 0, 2, 3)
    return np.ascontiguousarray(dx)


def conv2d_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray | None,
                   stride: int = 1, padding: int = 1):
    """Cross-correlation plus bias. Returns ``(output, cache)``."""
    if x.ndim != 4:
        raise ValueError(f"conv2d expects a 4-D input, got shape {x.shape}")
    c_out, c_in, kh, kw = weight.shape
    if x.shape[1] != c_in:
        raise ValueError(f"conv2d channel mismatch: input has {x.shape[1]}, layer expects {c_in}")
    cols, ho, wo = _im2col(x, kh, kw, stride, padding)
    out = cols.T @ weight.reshape(c_out, -1).T
    if bias is not None:
        out += bias
    out = out.reshape(x.shape[0], ho, wo, c_out).transpose(0, 3, 1, 2)
    cache = (cols, x.shape, weight, stride, padding, ho, wo)
    return np.ascontiguousarray(out), cache


def conv2d_backward(grad_out: np.ndarray, cache):
    """Returns ``(input_grad, weight_grad, bias_grad)``."""
    cols, x_shape, weight, stride, padding, ho, wo = cache
    c_out, c_in, kh, kw = weight.shape
    expected = (x_shape[0], c_out, ho, wo)
    if grad_out.shape != expected:
        raise ValueError(f"upstream gradient shape {grad_out.shape}, expected {expected}")
    g = grad_out.transpose(1, 0, 2, 3).reshape(c_out, -1)
    dw = (g @ cols.T).reshape(weight.shape)
    db = g.sum(axis=1)
    dcols = weight.reshape(c_out, -1).T @ g
    dx = _col2im(dcols, x_shape, kh, kw, stride, padding, ho, wo)
    return dx, dw, db


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 1) -> Tensor:
    out, cache = conv2d_forward(x.data, weight.data, None if bias is None else bias.data,
                                stride, padding)

    def backward(g):
        dx, dw, db = conv2d_backward(g, cache)
        return (dx, dw) if bias is None else (dx, dw, db)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _make(out, parents, backward)


# --- elementwise and structural ops --------------------------------------

def leaky_relu(x: Tensor, slope: float = 0.1) -> Tensor:
    # x == 0 takes the negative-side slope
    mask = x.data > 0
    if _kink_log is not None:
        _kink_log.append(mask)
    out = np.where(mask, x.data, x.data * x.data.dtype.type(slope))

    def backward(g):
        return (np.where(mask, g, g * g.dtype.type(slope)),)

    return _make(out, (x,), backward)


def concat_channels(*xs: Tensor) -> Tensor:
    ref = xs[0].shape
    for t in xs[1:]:
        if t.shape[0] != ref[0] or t.shape[2:] != ref[2:]:
            raise ValueError(f"cannot concatenate {ref} with {t.shape} along channels")
    sizes = [t.shape[1] for t in xs]
    out = np.concatenate([t.data for t in xs], axis=1)

    def backward(g):
        return tuple(np.split(g, np.cumsum(sizes)[:-1], axis=1))

    return _make(out, xs, backward)


def split_channels(x: Tensor, sizes) -> list[Tensor]:
    if sum(sizes) != x.shape[1]:
        raise ValueError(f"split sizes {sizes} do not sum to {x.shape[1]} channels")
    outs = []
    start = 0
    for s in sizes:
        sl = slice(start, start + s)

        def backward(g, sl=sl):
            full = np.zeros_like(x.data)
            full[:, sl] = g
            return (full,)

        outs.append(_make(x.data[:, sl].copy(), (x,), backward))
        start += s
    return outs


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"add shape mismatch {a.shape} vs {b.shape}")
    return _make(a.data + b.data, (a, b), lambda g: (g, g))


def scale(a: Tensor, k: float) -> Tensor:
    k = a.data.dtype.type(k)
    return _make(a.data * k, (a,), lambda g: (g * k,))


def sum_scalars(terms) -> Tensor:
    terms = list(terms)
    out = sum(t.data for t in terms)
    return _make(np.asarray(out), tuple(terms), lambda g: tuple(g for _ in terms))


def subtract_spatial_mean(x: Tensor) -> Tensor:
    """Remove each channel's spatial mean: (N, C, H, W) -> same shape."""
    out = x.data - x.data.mean(axis=(2, 3), keepdims=True)

    def backward(g):
        return (g - g.mean(axis=(2, 3), keepdims=True),)

    return _make(out, (x,), backward)


def global_avg_pool(x: Tensor) -> Tensor:
    """(N, C, H, W) -> (N, C)."""
    n, c, h, w = x.shape
    out = x.data.mean(axis=(2, 3))

    def backward(g):
        return (np.broadcast_to(g[:, :, None, None] / (h * w), x.shape).copy(),)

    return _make(out, (x,), backward)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """(N, D) @ (K, D).T + (K,)."""
    if x.shape[1] != weight.shape[1]:
        raise ValueError(f"linear expects {weight.shape[1]} features, got {x.shape[1]}")
    out = x.data @ weight.data.T + bias.data

    def backward(g):
        return g @ weight.data, g.T @ x.data, g.sum(axis=0)

    return _make(out, (x, weight, bias), backward)


def softmax_np(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax(logits: Tensor) -> Tensor:
    p = softmax_np(logits.data)

    def backward(g):
        return (p * (g - (g * p).sum(axis=1, keepdims=True)),)

    return _make(p, (logits,), backward)


# --- losses ----------------------------------------------------------------

def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean over all elements of the squared difference."""
    if pred.shape != target.shape:
        raise ValueError(f"mse_loss shape mismatch {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    n = diff.size
    out = np.asarray((diff * diff).sum() / n, dtype=diff.dtype)

    def backward(g):
        gd = (2.0 / n) * g * diff
        return gd.astype(diff.dtype), (-gd).astype(diff.dtype)

    return _make(out, (pred, target), backward)


def softmax_ce_loss(logits: Tensor, labels) -> Tensor:
    """Batch-mean softmax cross-entropy with integer class labels."""
    labels = np.asarray(labels, dtype=np.int64)
    n, k = logits.shape
    if labels.shape != (n,):
        raise ValueError(f"expected {n} labels, got shape {labels.shape}")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= k:
        raise ValueError(f"labels must lie in [0, {k})")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(n)
    out = np.asarray((logsum - z[rows, labels]).mean(), dtype=logits.dtype)

    def backward(g):
        p = softmax_np(logits.data)
        p[rows, labels] -= 1.0
        return (p * (g / n),)

    return _make(out, (logits,), backward)


def mean_neg_log(probs: Tensor, column: int) -> Tensor:
    """Batch mean of ``-log(max(probs[:, column], 1e-12))``."""
    p = probs.data[:, column]
    n = p.shape[0]
    clamped = np.maximum(p, LOG_FLOOR)
    out = np.asarray(-np.log(clamped).mean(), dtype=probs.dtype)

    def backward(g):
        full = np.zeros_like(probs.data)
        # no gradient through the floor
        full[:, column] = np.where(p > LOG_FLOOR, -g / (n * clamped), 0.0)
        return (full,)

    return _make(out, (probs,), backward)
