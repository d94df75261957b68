"""Differentiable image operators on N x C x H x W tensors."""

from __future__ import annotations

import contextlib

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError
from .tensor import Tensor


_pattern_log = None


@contextlib.contextmanager
def activation_pattern():
    """Record which side of each kink relu and maxpool2 inputs fall on.

    Yields a list that fills with one bytes entry per call (the relu mask or
    the pooling argmax). Two forward passes with equal lists evaluate the
    same smooth piece of the network.
    """
    global _pattern_log
    outer, _pattern_log = _pattern_log, []
    try:
        yield _pattern_log
    finally:
        _pattern_log = outer


def _fold_reflect(gpad: np.ndarray) -> np.ndarray:
    """Adjoint of 1-pixel reflect padding on the last two axes."""
    g = gpad[..., 1:-1, :].copy()
    g[..., 1, :] += gpad[..., 0, :]
    g[..., -2, :] += gpad[..., -1, :]
    out = g[..., 1:-1].copy()
    out[..., 1] += g[..., 0]
    out[..., -2] += g[..., -1]
    return out


def conv2d(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """3x3 convolution, stride 1, reflect padding of 1 (output keeps H x W)."""
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"conv2d expects 4-D input and weights, got {x.shape} and {weight.shape}")
    n, c, h, w = x.shape
    o, wc, kh, kw = weight.shape
    if wc != c or (kh, kw) != (3, 3):
        raise ShapeError(f"conv2d input {x.shape} incompatible with weights {weight.shape}")
    if bias.shape != (o,):
        raise ShapeError(f"conv2d bias {bias.shape} does not match {o} output channels")
    if h < 2 or w < 2:
        raise ShapeError(f"reflect padding needs at least 2 pixels per axis, got {h}x{w}")

    xp = np.pad(x.data, ((0, 0), (0, 0), (1, 1), (1, 1)), mode="reflect")
    # (n, h, w, c, 3, 3) -> rows of length c*9, ordered like weight.reshape(o, -1)
    cols = sliding_window_view(xp, (3, 3), axis=(2, 3)).transpose(0, 2, 3, 1, 4, 5)
    cols = np.ascontiguousarray(cols).reshape(n * h * w, c * 9)
    wmat = weight.data.reshape(o, c * 9)
    out = (cols @ wmat.T + bias.data).reshape(n, h, w, o).transpose(0, 3, 1, 2)

    def back(g):
        gmat = g.transpose(0, 2, 3, 1).reshape(n * h * w, o)
        gx = gw = gb = None
        if weight.requires_grad:
            gw = (gmat.T @ cols).reshape(o, c, 3, 3)
        if bias.requires_grad:
            gb = gmat.sum(axis=0)
        if x.requires_grad:
            gcols = (gmat @ wmat).reshape(n, h, w, c, 3, 3)
            gpad = np.zeros((n, c, h + 2, w + 2))
            for i in range(3):
                for j in range(3):
                    gpad[:, :, i : i + h, j : j + w] += gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            gx = _fold_reflect(gpad)
        return gx, gw, gb

    return Tensor.from_op(np.ascontiguousarray(out), (x, weight, bias), back, "conv2d")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    if _pattern_log is not None:
        _pattern_log.append(np.packbits(mask).tobytes())
    return Tensor.from_op(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,), "relu")


def sigmoid(x: Tensor) -> Tensor:
    out = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return Tensor.from_op(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def maxpool2(x: Tensor) -> Tensor:
    """2x2 non-overlapping max pool; ties go to the first element in row-major order."""
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2 needs even spatial dims, got {h}x{w}")
    h2, w2 = h // 2, w // 2
    win = x.data.reshape(n, c, h2, 2, w2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2, w2, 4)
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    if _pattern_log is not None:
        _pattern_log.append(idx.astype(np.uint8).tobytes())

    def back(g):
        gwin = np.zeros((n, c, h2, w2, 4))
        np.put_along_axis(gwin, idx[..., None], g[..., None], axis=-1)
        return (gwin.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w),)

    return Tensor.from_op(out, (x,), back, "maxpool2")


def upsample_nearest2(x: Tensor) -> Tensor:
    n, c, h, w = x.shape
    out = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)

    def back(g):
        return (g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)),)

    return Tensor.from_op(out, (x,), back, "upsample_nearest2")


def instance_moments(x: Tensor, eps: float = 1e-5) -> tuple[Tensor, Tensor]:
    """Per-(sample, channel) spatial mean and sqrt(population variance + eps)."""
    if x.ndim != 4:
        raise ShapeError(f"instance_moments expects N x C x H x W, got {x.shape}")
    n, c, h, w = x.shape
    hw = h * w
    mu = x.data.mean(axis=(2, 3))
    centered = x.data - mu[:, :, None, None]
    sigma = np.sqrt((centered * centered).mean(axis=(2, 3)) + eps)
    shape = x.shape

    def back_mu(g):
        return (np.broadcast_to(g[:, :, None, None] / hw, shape).copy(),)

    def back_sigma(g):
        return ((g / (hw * sigma))[:, :, None, None] * centered,)

    return (
        Tensor.from_op(mu, (x,), back_mu, "moments_mu"),
        Tensor.from_op(sigma, (x,), back_sigma, "moments_sigma"),
    )
