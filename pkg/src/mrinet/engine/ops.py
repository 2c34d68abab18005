"""Differentiable kernel wrappers.

Each function accepts plain arrays or :class:`~mrinet.engine.tape.Var`
operands. With no ``Var`` among the inputs the call is a plain forward
evaluation; otherwise the application is recorded on the operands' tape
and a ``Var`` is returned.
"""
from __future__ import annotations

import numpy as np

from . import kernels as K
from .tape import Var, tape_of, value_of


def _wrap(op, inputs, value, backward):
    tape = tape_of(*inputs)
    if tape is None:
        return value
    return tape.record(op, inputs, value, backward)


def conv2d(x, weights, bias=None, spec: K.ConvSpec | None = None, *, stride=None, padding=None):
    stride = spec.stride if stride is None and spec is not None else (stride or 1)
    padding = spec.padding if padding is None and spec is not None else (padding or "same")
    xv, wv, bv = value_of(x), value_of(weights), value_of(bias)
    if spec is not None:
        if xv.ndim == 4 and xv.shape[3] != spec.in_channels:
            raise K.DimensionError(
                f"input channels {xv.shape[3]} != spec.in_channels {spec.in_channels}", axis="channels"
            )
        if wv.shape != spec.weight_shape:
            raise K.DimensionError(f"weights {wv.shape} != spec {spec.weight_shape}", axis="weights")
    out = K.conv2d_forward(xv, wv, bv, stride, padding)

    def back(g, needs):
        dx, dw, db = K.conv2d_backward(g, xv, wv, stride, padding, need_x=needs[0], need_w=needs[1])
        return dx, dw, db

    return _wrap("conv2d", (x, weights, bias), out, back)


def depthwise_conv2d(x, weights, bias=None, stride=1, padding="same"):
    xv, wv, bv = value_of(x), value_of(weights), value_of(bias)
    out = K.depthwise_conv2d_forward(xv, wv, bv, stride, padding)

    def back(g, needs):
        return K.depthwise_conv2d_backward(g, xv, wv, stride, padding, need_x=needs[0], need_w=needs[1])

    return _wrap("depthwise_conv2d", (x, weights, bias), out, back)


def max_pool2d(x, window=(3, 3), stride=2, padding="same"):
    xv = value_of(x)
    out, arg = K.max_pool2d_forward(xv, window, stride, padding)

    def back(g, needs):
        return (K.max_pool2d_backward(g, xv.shape, arg, window, stride, padding),)

    return _wrap("max_pool2d", (x,), out, back)


def global_average_pool(x):
    xv = value_of(x)
    out = K.global_average_pool_forward(xv)

    def back(g, needs):
        return (K.global_average_pool_backward(g, xv.shape),)

    return _wrap("global_average_pool", (x,), out, back)


def dense_affine(x, weights, bias=None):
    xv, wv, bv = value_of(x), value_of(weights), value_of(bias)
    out = K.dense_forward(xv, wv, bv)

    def back(g, needs):
        return K.dense_backward(g, xv, wv, need_x=needs[0], need_w=needs[1])

    return _wrap("dense_affine", (x, weights, bias), out, back)


def batch_norm(x, gamma, beta, moving_mean, moving_var, train, epsilon=1e-5, momentum=0.99):
    """Returns ``(out, new_moving_mean, new_moving_var)``."""
    xv, gv, bv = value_of(x), value_of(gamma), value_of(beta)
    out, new_mean, new_var, cache = K.batch_norm_forward(
        xv, gv, bv, moving_mean, moving_var, train, epsilon, momentum
    )

    def back(g, needs):
        return K.batch_norm_backward(g, gv, cache)

    return _wrap("batch_norm", (x, gamma, beta), out, back), new_mean, new_var


def activation(x, kind="relu"):
    xv = value_of(x)
    out = K.activation_forward(xv, kind)

    def back(g, needs):
        return (K.activation_backward(g, xv, kind),)

    return _wrap(kind, (x,), out, back)


def relu(x):
    return activation(x, "relu")


def relu6(x):
    return activation(x, "relu6")


def softmax(logits):
    probs = K.softmax_forward(value_of(logits))

    def back(g, needs):
        return (K.softmax_backward(g, probs),)

    return _wrap("softmax", (logits,), probs, back)


def dropout(x, rate=0.2, train=False, rng=None):
    xv = value_of(x)
    out, keep = K.dropout_forward(xv, rate, train, rng)
    if keep is None:
        return x

    def back(g, needs):
        return (g * keep,)

    return _wrap("dropout", (x,), out, back)


def add(a, b):
    out = value_of(a) + value_of(b)

    def back(g, needs):
        return g, g

    return _wrap("add", (a, b), out, back)


def multiply(a, b):
    av, bv = value_of(a), value_of(b)
    out = av * bv

    def back(g, needs):
        return g * bv, g * av

    return _wrap("multiply", (a, b), out, back)


def reduce_sum(x):
    xv = value_of(x)
    out = np.asarray(xv.sum())

    def back(g, needs):
        return (np.broadcast_to(g, xv.shape).copy(),)

    return _wrap("reduce_sum", (x,), out, back)


def weighted_sum(x, weights):
    """Scalar ``sum(x * weights)``; a convenient probe loss for gradient checks."""
    return reduce_sum(multiply(x, weights))


def take(x, index):
    """Scalar element ``x[index]``."""
    xv = value_of(x)
    out = np.asarray(xv[index])

    def back(g, needs):
        dx = np.zeros_like(xv)
        dx[index] = g
        return (dx,)

    return _wrap("take", (x,), out, back)


def sparse_categorical_crossentropy(probs, labels, floor=K.PROB_FLOOR):
    pv = value_of(probs)
    labels = np.asarray(labels)
    loss = np.asarray(K.sparse_categorical_crossentropy_forward(pv, labels, floor))

    def back(g, needs):
        return (K.sparse_categorical_crossentropy_backward(g, pv, labels, floor),)

    return _wrap("sparse_categorical_crossentropy", (probs,), loss, back)


def softmax_crossentropy(logits, labels, floor=K.PROB_FLOOR):
    """Fused softmax + sparse CCE. Returns ``(loss, probs)``; probs are untracked."""
    lv = value_of(logits)
    loss, probs, floored = K.softmax_crossentropy_forward(lv, labels, floor)
    labels = np.asarray(labels, dtype=np.int64)

    def back(g, needs):
        return (K.softmax_crossentropy_backward(g, probs, labels, floored),)

    return _wrap("softmax_crossentropy", (logits,), np.asarray(loss), back), probs
