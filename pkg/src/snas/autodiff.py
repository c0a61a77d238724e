"""Minimal reverse-mode differentiation for the layer types the supernet uses.

Each op returns ``(output, tape_entry)``; the matching ``*_backward`` takes
the upstream gradient and the tape entry and returns gradients for inputs and
parameters. Networks are sequential, so the tape is a plain list replayed in
reverse.
"""
from __future__ import annotations

from typing import Callable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _same_padding(size: int, k: int, stride: int) -> tuple:
    out = -(-size // stride)
    total = max((out - 1) * stride + k - size, 0)
    return out, total // 2, total - total // 2


def conv2d(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray, stride: int = 1):
    """Same-padded 2-D convolution. ``x`` is NCHW, ``kernel`` is [Cout, Cin, k, k]."""
    n, c, h, w = x.shape
    cout, cin, k, _ = kernel.shape
    if cin != c:
        raise ValueError(f"conv2d: input has {c} channels, kernel expects {cin}")
    ho, pt, pb = _same_padding(h, k, stride)
    wo, pl, pr = _same_padding(w, k, stride)
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr))) if (pt or pb or pl or pr) else x
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :ho, :wo]
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * ho * wo, c * k * k)
    wmat = kernel.reshape(cout, c * k * k)
    out = cols @ wmat.T + bias
    out = np.ascontiguousarray(out.reshape(n, ho, wo, cout).transpose(0, 3, 1, 2))
    return out, (cols, kernel, x.shape, xp.shape, (pt, pl), stride)


def conv2d_backward(grad: np.ndarray, tape):
    cols, kernel, x_shape, xp_shape, (pt, pl), stride = tape
    n, c, h, w = x_shape
    cout, _, k, _ = kernel.shape
    ho, wo = grad.shape[2], grad.shape[3]
    g2 = np.ascontiguousarray(grad.transpose(0, 2, 3, 1)).reshape(-1, cout)
    dkernel = (g2.T @ cols).reshape(kernel.shape)
    dbias = g2.sum(axis=0)
    dcols = (g2 @ kernel.reshape(cout, -1)).reshape(n, ho, wo, c, k, k)
    dxp = np.zeros(xp_shape, dtype=grad.dtype)
    for i in range(k):
        for j in range(k):
            dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += \
                dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    dx = dxp[:, :, pt:pt + h, pl:pl + w]
    return np.ascontiguousarray(dx), dkernel, dbias


def relu(x: np.ndarray):
    mask = x > 0
    return x * mask, mask


def relu_backward(grad: np.ndarray, mask):
    return grad * mask


def global_avg_pool(x: np.ndarray):
    return x.mean(axis=(2, 3)), x.shape


def global_avg_pool_backward(grad: np.ndarray, shape):
    n, c, h, w = shape
    return np.broadcast_to((grad / (h * w))[:, :, None, None], shape).astype(grad.dtype)


def linear(x: np.ndarray, weight: np.ndarray, bias: np.ndarray):
    """``x`` is [N, F], ``weight`` is [F, classes]."""
    return x @ weight + bias, (x, weight)


def linear_backward(grad: np.ndarray, tape):
    x, weight = tape
    return grad @ weight.T, x.T @ grad, grad.sum(axis=0)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy, accumulated in float64. Returns ``(loss, dlogits)``."""
    z = logits.astype(np.float64)
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = len(labels)
    loss = -logp[np.arange(n), labels].mean()
    d = np.exp(logp)
    d[np.arange(n), labels] -= 1.0
    return float(loss), (d / n).astype(logits.dtype)


def _finite_difference(f: Callable[[], float], arr: np.ndarray, step: float) -> np.ndarray:
    g = np.zeros_like(arr, dtype=np.float64)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = arr[idx]
        arr[idx] = orig + step
        fp = f()
        arr[idx] = orig - step
        fm = f()
        arr[idx] = orig
        g[idx] = (fp - fm) / (2 * step)
    return g


def _max_rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    a = np.asarray(analytic, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), 1e-6)
    return float(np.max(np.abs(a - numeric) / denom))


def gradient_check(layer_kind: str, seed: int = 0, step: float = 1e-3) -> float:
    """Max relative error between analytic and central-difference gradients.

    A small instance of ``layer_kind`` is built from float32 draws, upcast to
    float64, and differentiated through the scalar ``sum(out * probe)`` for
    a fixed random ``probe``. Every input and parameter entry is checked.
    """
    rng = np.random.default_rng(seed)

    def f32(*shape, low=-1.0, high=1.0):
        return rng.uniform(low, high, size=shape).astype(np.float32).astype(np.float64)

    if layer_kind in ("Conv3x3", "Conv1x1"):
        k = 3 if layer_kind == "Conv3x3" else 1
        x, kern, b = f32(2, 3, 5, 5), f32(4, 3, k, k), f32(4)
        stride = 1 + seed % 2
        out, _ = conv2d(x, kern, b, stride)
        probe = f32(*out.shape)

        def loss():
            return float((conv2d(x, kern, b, stride)[0] * probe).sum())

        _, tape = conv2d(x, kern, b, stride)
        analytic = conv2d_backward(probe, tape)
        params = (x, kern, b)
    elif layer_kind == "LinearHead":
        x, wt, b = f32(3, 6), f32(6, 4), f32(4)
        probe = f32(3, 4)

        def loss():
            return float((linear(x, wt, b)[0] * probe).sum())

        _, tape = linear(x, wt, b)
        analytic = linear_backward(probe, tape)
        params = (x, wt, b)
    elif layer_kind == "ReLU":
        # keep every input at least 0.1 away from the kink
        mag = f32(2, 3, 4, 4, low=0.1, high=1.0)
        x = np.where(rng.random(mag.shape) < 0.5, -mag, mag)
        probe = f32(*x.shape)

        def loss():
            return float((relu(x)[0] * probe).sum())

        _, mask = relu(x)
        analytic = (relu_backward(probe, mask),)
        params = (x,)
    elif layer_kind == "GlobalAvgPool":
        x = f32(2, 3, 4, 4)
        probe = f32(2, 3)

        def loss():
            return float((global_avg_pool(x)[0] * probe).sum())

        analytic = (global_avg_pool_backward(probe, x.shape),)
        params = (x,)
    else:
        raise ValueError(f"no gradient check for layer kind {layer_kind!r}")

    return max(_max_rel_error(a, _finite_difference(loss, p, step))
               for a, p in zip(analytic, params))
