"""Layer kinds with explicit forward and backward passes.

All layers act on float64 arrays whose leading axis is the batch. Image-like
tensors use the ``(batch, channels, height, width)`` layout. Each layer exposes

* ``out_shape(in_shape)`` -- per-sample output shape, raising on mismatch,
* ``param_shapes(in_shape)`` -- ordered ``{name: shape}`` of trainable blocks,
* ``forward(p, x)`` -> ``(y, cache)``,
* ``backward(p, cache, dy)`` -> ``(grads, dx)`` with ``grads`` keyed like ``p``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import ClassVar

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError


def _pair(v) -> tuple[int, int]:
    if isinstance(v, int):
        return (v, v)
    a, b = v
    return (int(a), int(b))


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


@dataclass(frozen=True)
class Dense:
    in_features: int
    out_features: int
    kind: ClassVar[str] = "dense"

    def out_shape(self, in_shape):
        if tuple(in_shape) != (self.in_features,):
            raise ShapeError(f"expected input ({self.in_features},), got {tuple(in_shape)}")
        return (self.out_features,)

    def param_shapes(self, in_shape):
        return {"weight": (self.in_features, self.out_features), "bias": (self.out_features,)}

    def init(self, rng, in_shape):
        w = glorot_uniform(rng, (self.in_features, self.out_features), self.in_features, self.out_features)
        return {"weight": w, "bias": np.zeros(self.out_features)}

    def forward(self, p, x):
        return x @ p["weight"] + p["bias"], x

    def backward(self, p, x, dy):
        grads = {"weight": x.T @ dy, "bias": dy.sum(axis=0)}
        return grads, dy @ p["weight"].T


@dataclass(frozen=True)
class ReLU:
    kind: ClassVar[str] = "relu"

    def out_shape(self, in_shape):
        return tuple(in_shape)

    def param_shapes(self, in_shape):
        return {}

    def init(self, rng, in_shape):
        return {}

    def forward(self, p, x):
        # derivative at 0 is taken as 0, so the mask is strict
        mask = x > 0
        return np.where(mask, x, 0.0), mask

    def backward(self, p, mask, dy):
        return {}, np.where(mask, dy, 0.0)


def _conv_out(n: int, k: int, s: int, pad: int) -> int:
    return (n + 2 * pad - k) // s + 1


def _pad(x, pad):
    ph, pw = pad
    if ph == 0 and pw == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))


def _unpad(x, pad):
    ph, pw = pad
    return x[:, :, ph:x.shape[2] - ph, pw:x.shape[3] - pw]


@dataclass(frozen=True)
class Conv2D:
    """2-D cross-correlation (no kernel flip) with per-filter bias."""

    in_channels: int
    filters: int
    kernel: tuple[int, int] = (3, 3)
    stride: int = 1
    padding: int = 0
    kind: ClassVar[str] = "conv2d"

    def out_shape(self, in_shape):
        if len(in_shape) != 3 or in_shape[0] != self.in_channels:
            raise ShapeError(f"expected input ({self.in_channels}, H, W), got {tuple(in_shape)}")
        kh, kw = _pair(self.kernel)
        ho = _conv_out(in_shape[1], kh, self.stride, self.padding)
        wo = _conv_out(in_shape[2], kw, self.stride, self.padding)
        if ho < 1 or wo < 1:
            raise ShapeError(f"kernel {self.kernel} does not fit input {tuple(in_shape)}")
        return (self.filters, ho, wo)

    def param_shapes(self, in_shape):
        kh, kw = _pair(self.kernel)
        return {"weight": (self.filters, self.in_channels, kh, kw), "bias": (self.filters,)}

    def init(self, rng, in_shape):
        kh, kw = _pair(self.kernel)
        shape = (self.filters, self.in_channels, kh, kw)
        w = glorot_uniform(rng, shape, self.in_channels * kh * kw, self.filters * kh * kw)
        return {"weight": w, "bias": np.zeros(self.filters)}

    def _windows(self, xp):
        kh, kw = _pair(self.kernel)
        s = self.stride
        win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
        return win[:, :, ::s, ::s]  # (N, C, Ho, Wo, kh, kw)

    def forward(self, p, x):
        pad = (self.padding, self.padding)
        win = self._windows(_pad(x, pad))
        y = np.tensordot(win, p["weight"], axes=([1, 4, 5], [1, 2, 3]))  # (N, Ho, Wo, F)
        y = y.transpose(0, 3, 1, 2) + p["bias"][:, None, None]
        return np.ascontiguousarray(y), (x.shape, win)

    def backward(self, p, cache, dy):
        x_shape, win = cache
        kh, kw = _pair(self.kernel)
        s = self.stride
        pad = (self.padding, self.padding)
        ho, wo = dy.shape[2], dy.shape[3]
        grads = {
            "weight": np.tensordot(dy, win, axes=([0, 2, 3], [0, 2, 3])),
            "bias": dy.sum(axis=(0, 2, 3)),
        }
        cols = np.tensordot(dy, p["weight"], axes=([1], [0]))  # (N, Ho, Wo, C, kh, kw)
        n, c, h, w = x_shape
        dxp = np.zeros((n, c, h + 2 * pad[0], w + 2 * pad[1]))
        for a in range(kh):
            for b in range(kw):
                dxp[:, :, a:a + s * ho:s, b:b + s * wo:s] += cols[..., a, b].transpose(0, 3, 1, 2)
        return grads, _unpad(dxp, pad)


@dataclass(frozen=True)
class AvgPool2D:
    """Average pooling; padded cells count as zeros in the mean."""

    kernel: tuple[int, int] = (2, 2)
    stride: int = 2
    padding: int = 0
    kind: ClassVar[str] = "avgpool2d"

    def out_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ShapeError(f"expected input (C, H, W), got {tuple(in_shape)}")
        kh, kw = _pair(self.kernel)
        ho = _conv_out(in_shape[1], kh, self.stride, self.padding)
        wo = _conv_out(in_shape[2], kw, self.stride, self.padding)
        if ho < 1 or wo < 1:
            raise ShapeError(f"pool window {self.kernel} does not fit input {tuple(in_shape)}")
        return (in_shape[0], ho, wo)

    def param_shapes(self, in_shape):
        return {}

    def init(self, rng, in_shape):
        return {}

    def forward(self, p, x):
        kh, kw = _pair(self.kernel)
        pad = (self.padding, self.padding)
        win = sliding_window_view(_pad(x, pad), (kh, kw), axis=(2, 3))[:, :, ::self.stride, ::self.stride]
        return win.mean(axis=(4, 5)), x.shape

    def backward(self, p, x_shape, dy):
        kh, kw = _pair(self.kernel)
        s = self.stride
        pad = (self.padding, self.padding)
        n, c, h, w = x_shape
        ho, wo = dy.shape[2], dy.shape[3]
        dxp = np.zeros((n, c, h + 2 * pad[0], w + 2 * pad[1]))
        share = dy / (kh * kw)
        for a in range(kh):
            for b in range(kw):
                dxp[:, :, a:a + s * ho:s, b:b + s * wo:s] += share
        return {}, _unpad(dxp, pad)


@dataclass(frozen=True)
class Flatten:
    kind: ClassVar[str] = "flatten"

    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def param_shapes(self, in_shape):
        return {}

    def init(self, rng, in_shape):
        return {}

    def forward(self, p, x):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, p, x_shape, dy):
        return {}, dy.reshape(x_shape)


@dataclass(frozen=True)
class ResNetBlock:
    """``y = x + MLP(x)`` where the MLP is ``depth`` dense+ReLU layers of ``width``."""

    width: int
    depth: int = 2
    kind: ClassVar[str] = "resnet-block"

    def out_shape(self, in_shape):
        if tuple(in_shape) != (self.width,):
            raise ShapeError(f"expected input ({self.width},), got {tuple(in_shape)}")
        return (self.width,)

    def param_shapes(self, in_shape):
        shapes = {}
        for i in range(self.depth):
            shapes[f"weight{i}"] = (self.width, self.width)
            shapes[f"bias{i}"] = (self.width,)
        return shapes

    def init(self, rng, in_shape):
        out = {}
        for i in range(self.depth):
            out[f"weight{i}"] = glorot_uniform(rng, (self.width, self.width), self.width, self.width)
            out[f"bias{i}"] = np.zeros(self.width)
        return out

    def forward(self, p, x):
        h = x
        tape = []
        for i in range(self.depth):
            z = h @ p[f"weight{i}"] + p[f"bias{i}"]
            mask = z > 0
            tape.append((h, mask))
            h = np.where(mask, z, 0.0)
        return x + h, tape

    def backward(self, p, tape, dy):
        grads = {}
        dh = dy
        for i in reversed(range(self.depth)):
            h_in, mask = tape[i]
            dz = np.where(mask, dh, 0.0)
            grads[f"weight{i}"] = h_in.T @ dz
            grads[f"bias{i}"] = dz.sum(axis=0)
            dh = dz @ p[f"weight{i}"].T
        return grads, dy + dh


LAYER_KINDS = {cls.kind: cls for cls in (Dense, ReLU, Conv2D, AvgPool2D, Flatten, ResNetBlock)}
