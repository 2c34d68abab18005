"""Naive reference implementations, written independently of the package kernels."""
import math

import numpy as np


def pad_amounts(size, k, stride, padding):
    if padding == "valid":
        return 0, 0, (size - k) // stride + 1
    out = math.ceil(size / stride)
    total = max((out - 1) * stride + k - size, 0)
    return total // 2, total - total // 2, out


def conv2d_loops(x, w, b, stride, padding):
    n, h, wd, cin = x.shape
    kh, kw, _, cout = w.shape
    pt, _, ho = pad_amounts(h, kh, stride, padding)
    pl, _, wo = pad_amounts(wd, kw, stride, padding)
    out = np.zeros((n, ho, wo, cout))
    for bi in range(n):
        for oy in range(ho):
            for ox in range(wo):
                for co in range(cout):
                    acc = 0.0
                    for i in range(kh):
                        for j in range(kw):
                            iy = oy * stride + i - pt
                            ix = ox * stride + j - pl
                            if 0 <= iy < h and 0 <= ix < wd:
                                for ci in range(cin):
                                    acc += x[bi, iy, ix, ci] * w[i, j, ci, co]
                    out[bi, oy, ox, co] = acc + (b[co] if b is not None else 0.0)
    return out


def depthwise_loops(x, w, b, stride, padding):
    n, h, wd, c = x.shape
    kh, kw = w.shape[:2]
    pt, _, ho = pad_amounts(h, kh, stride, padding)
    pl, _, wo = pad_amounts(wd, kw, stride, padding)
    out = np.zeros((n, ho, wo, c))
    for bi in range(n):
        for ch in range(c):
            for oy in range(ho):
                for ox in range(wo):
                    acc = 0.0
                    for i in range(kh):
                        for j in range(kw):
                            iy, ix = oy * stride + i - pt, ox * stride + j - pl
                            if 0 <= iy < h and 0 <= ix < wd:
                                acc += x[bi, iy, ix, ch] * w[i, j, ch, 0]
                    out[bi, oy, ox, ch] = acc + (b[ch] if b is not None else 0.0)
    return out


def maxpool_loops(x, window, stride, padding):
    n, h, wd, c = x.shape
    kh, kw = window
    pt, _, ho = pad_amounts(h, kh, stride, padding)
    pl, _, wo = pad_amounts(wd, kw, stride, padding)
    out = np.full((n, ho, wo, c), -np.inf)
    for bi in range(n):
        for oy in range(ho):
            for ox in range(wo):
                for ch in range(c):
                    for i in range(kh):
                        for j in range(kw):
                            iy, ix = oy * stride + i - pt, ox * stride + j - pl
                            if 0 <= iy < h and 0 <= ix < wd:
                                out[bi, oy, ox, ch] = max(out[bi, oy, ox, ch], x[bi, iy, ix, ch])
    return out


def gap_loops(x):
    n, h, w, c = x.shape
    out = np.zeros((n, c))
    for bi in range(n):
        for ch in range(c):
            s = 0.0
            for i in range(h):
                for j in range(w):
                    s += x[bi, i, j, ch]
            out[bi, ch] = s / (h * w)
    return out


def matmul_loops(x, w, b):
    n, d = x.shape
    u = w.shape[1]
    out = np.zeros((n, u))
    for i in range(n):
        for k in range(u):
            s = 0.0
            for j in range(d):
                s += x[i, j] * w[j, k]
            out[i, k] = s + b[k]
    return out


# -- parameter arithmetic ---------------------------------------------------------------


def conv_params(k, cin, cout, bias):
    return k * k * cin * cout + (cout if bias else 0)


def resnet50_backbone_counts():
    """(trainable, running statistics) for the ResNet-50 backbone with conv biases."""
    trainable = conv_params(7, 3, 64, True) + 2 * 64
    stats = 2 * 64
    cin = 64
    for mid, out, reps in ((64, 256, 3), (128, 512, 4), (256, 1024, 6), (512, 2048, 3)):
        for r in range(reps):
            trainable += conv_params(1, cin, mid, True) + conv_params(3, mid, mid, True)
            trainable += conv_params(1, mid, out, True)
            trainable += 2 * (mid + mid + out)
            stats += 2 * (mid + mid + out)
            if r == 0:
                trainable += conv_params(1, cin, out, True) + 2 * out
                stats += 2 * out
            cin = out
    return trainable, stats


def mobilenetv2_backbone_counts():
    trainable = conv_params(3, 3, 32, False) + 2 * 32
    stats = 2 * 32
    cin = 32
    table = ((1, 16, 1), (6, 24, 2), (6, 32, 3), (6, 64, 4), (6, 96, 3), (6, 160, 3), (6, 320, 1))
    for t, c, n in table:
        for _ in range(n):
            hidden = cin * t
            if t != 1:
                trainable += cin * hidden + 2 * hidden
                stats += 2 * hidden
            trainable += 9 * hidden + 2 * hidden
            stats += 2 * hidden
            trainable += hidden * c + 2 * c
            stats += 2 * c
            cin = c
    trainable += cin * 1280 + 2 * 1280
    stats += 2 * 1280
    return trainable, stats


def head_count(d, hidden=512, classes=5):
    return d * hidden + hidden + hidden * hidden + hidden + hidden * classes + classes


# -- Adam reference -----------------------------------------------------------------------


def adam_scalar_reference(theta, grad_fn, steps, lr, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    out = []
    for t in range(1, steps + 1):
        g = grad_fn(theta)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g**2
        mh = m / (1 - b1**t)
        vh = v / (1 - b2**t)
        theta = theta - lr * mh / (math.sqrt(vh) + eps)
        out.append(theta)
    return out


def batchnorm_loops(x, gamma, beta, mean, var, train, eps=1e-5):
    n, h, w, c = x.shape
    out = np.zeros_like(x, dtype=np.float64)
    for ch in range(c):
        if train:
            vals = [x[b, i, j, ch] for b in range(n) for i in range(h) for j in range(w)]
            mu = sum(vals) / len(vals)
            sigma2 = sum((v - mu) ** 2 for v in vals) / len(vals)
        else:
            mu, sigma2 = mean[ch], var[ch]
        for b in range(n):
            for i in range(h):
                for j in range(w):
                    out[b, i, j, ch] = gamma[ch] * (x[b, i, j, ch] - mu) / math.sqrt(sigma2 + eps) + beta[ch]
    return out
