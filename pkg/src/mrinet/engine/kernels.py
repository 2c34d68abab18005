"""Forward and backward numeric kernels on NHWC numpy arrays.

Every kernel here is a pure function. Forward functions return the output
together with whatever the matching backward function needs; nothing is
mutated in place. Weight layout for convolutions is ``[kh, kw, Cin, Cout]``
(``[kh, kw, C, 1]`` for depthwise).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DimensionError

PADDINGS = ("same", "valid")
ACTIVATIONS = ("relu", "relu6")


@dataclass(frozen=True)
class ConvSpec:
    kernel_h: int
    kernel_w: int
    in_channels: int
    out_channels: int
    stride: int = 1
    padding: str = "same"
    use_bias: bool = True
    depthwise: bool = False

    def __post_init__(self):
        for field in ("kernel_h", "kernel_w", "in_channels", "out_channels", "stride"):
            if int(getattr(self, field)) < 1:
                raise ConfigError(f"ConvSpec.{field} must be a positive int")
        if self.padding not in PADDINGS:
            raise ConfigError(f"padding must be one of {PADDINGS}, got {self.padding!r}")
        if self.depthwise and self.out_channels != self.in_channels:
            raise ConfigError("depthwise convolution requires out_channels == in_channels")

    @property
    def weight_shape(self) -> tuple[int, ...]:
        if self.depthwise:
            return (self.kernel_h, self.kernel_w, self.in_channels, 1)
        return (self.kernel_h, self.kernel_w, self.in_channels, self.out_channels)


def output_size(size: int, kernel: int, stride: int, padding: str) -> int:
    if padding == "same":
        return -(-size // stride)
    if padding == "valid":
        if size < kernel:
            raise DimensionError(f"window {kernel} larger than input extent {size}")
        return (size - kernel) // stride + 1
    raise ConfigError(f"unknown padding {padding!r}")


def same_padding(size: int, kernel: int, stride: int) -> tuple[int, int]:
    """(before, after) padding; the odd pixel goes after."""
    out = -(-size // stride)
    total = max((out - 1) * stride + kernel - size, 0)
    return total // 2, total - total // 2


def _check_nhwc(x, name="input"):
    if x.ndim != 4:
        raise DimensionError(f"{name} must be NHWC (4-d), got shape {x.shape}", axis="rank")
    if x.shape[1] < 1 or x.shape[2] < 1:
        raise DimensionError(f"{name} has zero-size spatial dims {x.shape}", axis="H,W")


def _pad_nhwc(x, kh, kw, stride, padding, fill=0.0):
    _, h, w, _ = x.shape
    ho = output_size(h, kh, stride, padding)
    wo = output_size(w, kw, stride, padding)
    if padding == "same":
        top, bottom = same_padding(h, kh, stride)
        left, right = same_padding(w, kw, stride)
        if top or bottom or left or right:
            x = np.pad(x, ((0, 0), (top, bottom), (left, right), (0, 0)), constant_values=fill)
        pads = (top, bottom, left, right)
    else:
        pads = (0, 0, 0, 0)
    return x, ho, wo, pads


def _window(xp, i, j, ho, wo, stride):
    return xp[:, i : i + stride * (ho - 1) + 1 : stride, j : j + stride * (wo - 1) + 1 : stride, :]


def _unpad(dxp, pads):
    top, bottom, left, right = pads
    h = dxp.shape[1] - top - bottom
    w = dxp.shape[2] - left - right
    return dxp[:, top : top + h, left : left + w, :]


# -- convolution ------------------------------------------------------------


def _im2col(xp, kh, kw, ho, wo, stride):
    n, c = xp.shape[0], xp.shape[3]
    if kh == kw == 1 and stride == 1:
        return xp.reshape(n * ho * wo, c)
    cols = np.empty((n, ho, wo, kh, kw, c), dtype=xp.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, :, i, j, :] = _window(xp, i, j, ho, wo, stride)
    return cols.reshape(n * ho * wo, kh * kw * c)


def conv2d_forward(x, weights, bias, stride=1, padding="same"):
    """Cross-correlation (no kernel flip) plus optional bias."""
    _check_nhwc(x)
    if weights.ndim != 4:
        raise DimensionError(f"weights must be [kh,kw,Cin,Cout], got {weights.shape}", axis="rank")
    kh, kw, cin, cout = weights.shape
    if x.shape[3] != cin:
        raise DimensionError(
            f"input channels {x.shape[3]} != weight in_channels {cin}", axis="channels"
        )
    if bias is not None and bias.shape != (cout,):
        raise DimensionError(f"bias shape {bias.shape} != ({cout},)", axis="out_channels")
    xp, ho, wo, pads = _pad_nhwc(x, kh, kw, stride, padding)
    cols = _im2col(xp, kh, kw, ho, wo, stride)
    out = cols @ weights.reshape(kh * kw * cin, cout)
    if bias is not None:
        out += bias
    return out.reshape(x.shape[0], ho, wo, cout)


def conv2d_backward(dy, x, weights, stride=1, padding="same", need_x=True, need_w=True):
    """Gradients (dx, dw, db) of conv2d; entries are None when not requested."""
    kh, kw, cin, cout = weights.shape
    n = x.shape[0]
    xp, ho, wo, pads = _pad_nhwc(x, kh, kw, stride, padding)
    dy2 = dy.reshape(n * ho * wo, cout)
    dx = dw = None
    if need_w:
        cols = _im2col(xp, kh, kw, ho, wo, stride)
        dw = (cols.T @ dy2).reshape(weights.shape)
    if need_x:
        dcols = (dy2 @ weights.reshape(kh * kw * cin, cout).T).reshape(n, ho, wo, kh, kw, cin)
        dxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                _window(dxp, i, j, ho, wo, stride)[...] += dcols[:, :, :, i, j, :]
        dx = _unpad(dxp, pads)
    db = dy2.sum(axis=0)
    return dx, dw, db


def depthwise_conv2d_forward(x, weights, bias, stride=1, padding="same"):
    _check_nhwc(x)
    if weights.ndim != 4 or weights.shape[3] != 1:
        raise DimensionError(f"depthwise weights must be [kh,kw,C,1], got {weights.shape}", axis="rank")
    kh, kw, c, _ = weights.shape
    if x.shape[3] != c:
        raise DimensionError(f"input channels {x.shape[3]} != depthwise channels {c}", axis="channels")
    if bias is not None and bias.shape != (c,):
        raise DimensionError(f"bias shape {bias.shape} != ({c},)", axis="channels")
    xp, ho, wo, _ = _pad_nhwc(x, kh, kw, stride, padding)
    out = np.zeros((x.shape[0], ho, wo, c), dtype=np.result_type(x, weights))
    for i in range(kh):
        for j in range(kw):
            out += _window(xp, i, j, ho, wo, stride) * weights[i, j, :, 0]
    if bias is not None:
        out += bias
    return out


def depthwise_conv2d_backward(dy, x, weights, stride=1, padding="same", need_x=True, need_w=True):
    kh, kw, c, _ = weights.shape
    xp, ho, wo, pads = _pad_nhwc(x, kh, kw, stride, padding)
    dx = dw = None
    if need_w:
        dw = np.zeros_like(weights)
        for i in range(kh):
            for j in range(kw):
                dw[i, j, :, 0] = (_window(xp, i, j, ho, wo, stride) * dy).sum(axis=(0, 1, 2))
    if need_x:
        dxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                _window(dxp, i, j, ho, wo, stride)[...] += dy * weights[i, j, :, 0]
        dx = _unpad(dxp, pads)
    db = dy.sum(axis=(0, 1, 2))
    return dx, dw, db


# -- pooling ----------------------------------------------------------------


def max_pool2d_forward(x, window=(3, 3), stride=2, padding="same"):
    """Returns (output, argmax) where argmax is the row-major window offset of the winner."""
    _check_nhwc(x)
    kh, kw = window
    if padding == "valid" and (x.shape[1] < kh or x.shape[2] < kw):
        raise DimensionError(f"pool window {window} larger than input {x.shape[1:3]}", axis="H,W")
    xp, ho, wo, _ = _pad_nhwc(x, kh, kw, stride, padding, fill=-np.inf)
    best = _window(xp, 0, 0, ho, wo, stride).copy()
    arg = np.zeros(best.shape, dtype=np.int64)
    for k in range(1, kh * kw):
        i, j = divmod(k, kw)
        patch = _window(xp, i, j, ho, wo, stride)
        # strict comparison keeps the first occurrence on ties
        better = patch > best
        best[better] = patch[better]
        arg[better] = k
    return best, arg


def max_pool2d_backward(dy, x_shape, arg, window=(3, 3), stride=2, padding="same"):
    kh, kw = window
    n, h, w, c = x_shape
    ho = output_size(h, kh, stride, padding)
    wo = output_size(w, kw, stride, padding)
    if padding == "same":
        top, bottom = same_padding(h, kh, stride)
        left, right = same_padding(w, kw, stride)
    else:
        top = bottom = left = right = 0
    dxp = np.zeros((n, h + top + bottom, w + left + right, c), dtype=dy.dtype)
    for k in range(kh * kw):
        i, j = divmod(k, kw)
        _window(dxp, i, j, ho, wo, stride)[...] += np.where(arg == k, dy, 0)
    return _unpad(dxp, (top, bottom, left, right))


def global_average_pool_forward(x):
    _check_nhwc(x)
    return x.mean(axis=(1, 2))


def global_average_pool_backward(dy, x_shape):
    n, h, w, c = x_shape
    return np.broadcast_to((dy / (h * w))[:, None, None, :], x_shape).copy()


# -- dense ------------------------------------------------------------------


def dense_forward(x, weights, bias):
    if x.ndim != 2 or weights.ndim != 2:
        raise DimensionError(f"dense expects [N,D]x[D,U], got {x.shape} x {weights.shape}", axis="rank")
    if x.shape[1] != weights.shape[0]:
        raise DimensionError(
            f"inner dims disagree: input D={x.shape[1]}, weights D={weights.shape[0]}", axis="D"
        )
    if bias is not None and bias.shape != (weights.shape[1],):
        raise DimensionError(f"bias shape {bias.shape} != ({weights.shape[1]},)", axis="U")
    out = x @ weights
    if bias is not None:
        out += bias
    return out


def dense_backward(dy, x, weights, need_x=True, need_w=True):
    dx = dy @ weights.T if need_x else None
    dw = x.T @ dy if need_w else None
    return dx, dw, dy.sum(axis=0)


# -- batch normalization ----------------------------------------------------


@dataclass
class BatchNormCache:
    xhat: np.ndarray
    inv_std: np.ndarray
    train: bool


def batch_norm_forward(x, gamma, beta, moving_mean, moving_var, train, epsilon=1e-5, momentum=0.99):
    """Normalize over every axis but the last.

    Returns ``(out, new_mean, new_var, cache)``; in infer mode the returned
    running statistics are the inputs, untouched.
    """
    c = x.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise DimensionError(f"gamma/beta length must equal channels {c}", axis="channels")
    axes = tuple(range(x.ndim - 1))
    count = int(np.prod(x.shape[:-1]))
    if count == 0:
        raise DimensionError(f"zero-size input {x.shape}", axis="N,H,W")
    if train:
        if count < 2:
            raise DimensionError("train-mode batch norm needs at least 2 values per channel", axis="N,H,W")
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        new_mean = momentum * moving_mean + (1 - momentum) * mean
        new_var = momentum * moving_var + (1 - momentum) * var
        new_mean = new_mean.astype(moving_mean.dtype, copy=False)
        new_var = new_var.astype(moving_var.dtype, copy=False)
    else:
        mean, var = moving_mean, moving_var
        new_mean, new_var = moving_mean, moving_var
    inv_std = 1.0 / np.sqrt(var + epsilon)
    xhat = (x - mean) * inv_std
    out = gamma * xhat + beta
    return out, new_mean, new_var, BatchNormCache(xhat, inv_std, train)


def batch_norm_backward(dy, gamma, cache: BatchNormCache):
    axes = tuple(range(dy.ndim - 1))
    xhat, inv_std = cache.xhat, cache.inv_std
    dgamma = (dy * xhat).sum(axis=axes)
    dbeta = dy.sum(axis=axes)
    dxhat = dy * gamma
    if not cache.train:
        return dxhat * inv_std, dgamma, dbeta
    m = int(np.prod(dy.shape[:-1]))
    dx = (inv_std / m) * (m * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes))
    return dx, dgamma, dbeta


# -- elementwise ------------------------------------------------------------


def activation_forward(x, kind):
    if kind == "relu":
        return np.maximum(x, 0)
    if kind == "relu6":
        return np.minimum(np.maximum(x, 0), 6)
    raise ConfigError(f"unknown activation {kind!r}")


def activation_backward(dy, x, kind):
    # subgradient 0 at the kinks x=0 and x=6
    if kind == "relu":
        return np.where(x > 0, dy, 0)
    return np.where((x > 0) & (x < 6), dy, 0)


def softmax_forward(logits):
    if logits.ndim != 2 or logits.shape[1] < 1:
        raise DimensionError(f"softmax expects [N,K] with K>=1, got {logits.shape}", axis="K")
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_backward(dy, probs):
    return probs * (dy - (dy * probs).sum(axis=1, keepdims=True))


def dropout_mask(shape, rate, rng):
    if not 0 <= rate < 1:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    return rng.random(shape) >= rate


def dropout_forward(x, rate, train, rng=None):
    """Inverted dropout. Returns (out, scaled_mask or None)."""
    if not 0 <= rate < 1:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not train:
        return x, None
    if rng is None:
        raise ConfigError("train-mode dropout needs an rng")
    scale = np.asarray(1.0 / (1.0 - rate), dtype=x.dtype)
    keep = dropout_mask(x.shape, rate, rng) * scale
    return x * keep, keep


# -- losses -----------------------------------------------------------------

PROB_FLOOR = 1e-12


def _check_labels(labels, k):
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise DimensionError(f"labels must be 1-d, got {labels.shape}", axis="N")
    bad = np.flatnonzero((labels < 0) | (labels >= k))
    if bad.size:
        from ..errors import LabelError

        raise LabelError(f"label {labels[bad[0]]} at index {bad[0]} outside 0..{k - 1}")
    return labels.astype(np.int64)


def sparse_categorical_crossentropy_forward(probs, labels, floor=PROB_FLOOR):
    labels = _check_labels(labels, probs.shape[1])
    if labels.shape[0] != probs.shape[0]:
        raise DimensionError("labels and probs disagree on N", axis="N")
    picked = probs[np.arange(len(labels)), labels]
    return -np.log(np.maximum(picked, floor)).mean()


def sparse_categorical_crossentropy_backward(dloss, probs, labels, floor=PROB_FLOOR):
    labels = np.asarray(labels, dtype=np.int64)
    n = len(labels)
    rows = np.arange(n)
    picked = probs[rows, labels]
    grad = np.zeros_like(probs)
    live = picked > floor
    grad[rows[live], labels[live]] = -dloss / (n * picked[live])
    return grad


def softmax_crossentropy_forward(logits, labels, floor=PROB_FLOOR):
    """Softmax then sparse CCE, fused. Returns (loss, probs, floored_rows)."""
    labels = _check_labels(labels, logits.shape[1])
    if labels.shape[0] != logits.shape[0]:
        raise DimensionError("labels and logits disagree on N", axis="N")
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1, keepdims=True))
    log_probs = z - log_norm
    picked = log_probs[np.arange(len(labels)), labels]
    log_floor = np.asarray(np.log(floor), dtype=logits.dtype)
    floored = picked < log_floor
    loss = -np.where(floored, log_floor, picked).mean()
    return loss, np.exp(log_probs), floored


def softmax_crossentropy_backward(dloss, probs, labels, floored):
    n = len(labels)
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1
    grad[floored] = 0
    return (grad * (dloss / n)).astype(probs.dtype, copy=False)
