"""Layers with explicit forward and backward passes.

Tensors are numpy arrays laid out batch-first: ``(B, C, L)`` for 1-D
feature maps and ``(B, C, H, L)`` for the 2-D input of the spectrum
variants. Each layer caches what its backward pass needs during
``forward(..., train=True)`` and writes parameter gradients into
``self.grads``.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv_out_len(length: int, kernel: int, stride: int) -> int:
    return (length - kernel) // stride + 1


class Layer:
    kind = "layer"
    fields: tuple[str, ...] = ()

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def forward(self, x, train=False):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError

    def out_shape(self, shape: tuple) -> tuple:
        """Per-example output shape for a per-example input shape."""
        return shape

    def init_params(self, rng, dtype):
        pass

    def config(self) -> dict:
        return {f: getattr(self, f) for f in self.fields}

    def zero_grad(self):
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def __repr__(self):
        args = ", ".join(f"{k}={v}" for k, v in self.config().items())
        return f"{type(self).__name__}({args})"


def _fan_in_uniform(rng, shape, fan_in, dtype):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Conv1d(Layer):
    kind = "conv1d"
    fields = ("in_ch", "out_ch", "kernel", "stride")

    def __init__(self, in_ch, out_ch, kernel, stride=1):
        super().__init__()
        self.in_ch, self.out_ch, self.kernel, self.stride = in_ch, out_ch, kernel, stride

    def init_params(self, rng, dtype):
        fan_in = self.in_ch * self.kernel
        self.params["weight"] = _fan_in_uniform(rng, (self.out_ch, self.in_ch, self.kernel), fan_in, dtype)
        self.params["bias"] = _fan_in_uniform(rng, (self.out_ch,), fan_in, dtype)

    def out_shape(self, shape):
        c, length = shape
        if c != self.in_ch:
            raise ValueError(f"Conv1d expects {self.in_ch} channels, got {c}")
        return (self.out_ch, conv_out_len(length, self.kernel, self.stride))

    def forward(self, x, train=False):
        b, c, length = x.shape
        k, s = self.kernel, self.stride
        lout = conv_out_len(length, k, s)
        if c != self.in_ch or lout < 1:
            raise ValueError(f"Conv1d{self.config()} cannot take input {x.shape}")
        win = sliding_window_view(x, k, axis=2)[:, :, ::s][:, :, :lout]  # (B, C, Lout, K)
        # one 2-D product is much faster than a stack of per-example ones
        cols = win.transpose(0, 2, 1, 3).reshape(b * lout, c * k)
        w = self.params["weight"].reshape(self.out_ch, c * k)
        out = cols @ w.T + self.params["bias"]
        if train:
            self._cache = (cols, x.shape)
        return np.ascontiguousarray(out.reshape(b, lout, self.out_ch).transpose(0, 2, 1))

    def backward(self, dout):
        cols, (b, c, length) = self._cache
        k, s = self.kernel, self.stride
        lout = dout.shape[2]
        d = dout.transpose(0, 2, 1).reshape(b * lout, self.out_ch)
        w = self.params["weight"].reshape(self.out_ch, c * k)
        self.grads["weight"] = (d.T @ cols).reshape(self.params["weight"].shape)
        self.grads["bias"] = dout.sum(axis=(0, 2))
        dcols = (d @ w).reshape(b, lout, c, k)
        dx = np.zeros((b, c, length), dtype=dout.dtype)
        span = s * (lout - 1) + 1
        for j in range(k):
            dx[:, :, j:j + span:s] += dcols[:, :, :, j].transpose(0, 2, 1)
        return dx


class Conv2d(Layer):
    """2-D convolution; ``kernel``/``stride`` are given as (along time, across rows)."""

    kind = "conv2d"
    fields = ("in_ch", "out_ch", "kernel_w", "kernel_h", "stride_w", "stride_h")

    def __init__(self, in_ch, out_ch, kernel=(50, 2), stride=(3, 1)):
        super().__init__()
        self.in_ch, self.out_ch = in_ch, out_ch
        self.kernel_w, self.kernel_h = kernel
        self.stride_w, self.stride_h = stride

    def init_params(self, rng, dtype):
        fan_in = self.in_ch * self.kernel_h * self.kernel_w
        shape = (self.out_ch, self.in_ch, self.kernel_h, self.kernel_w)
        self.params["weight"] = _fan_in_uniform(rng, shape, fan_in, dtype)
        self.params["bias"] = _fan_in_uniform(rng, (self.out_ch,), fan_in, dtype)

    def out_shape(self, shape):
        c, h, length = shape
        if c != self.in_ch:
            raise ValueError(f"Conv2d expects {self.in_ch} channels, got {c}")
        return (self.out_ch, conv_out_len(h, self.kernel_h, self.stride_h),
                conv_out_len(length, self.kernel_w, self.stride_w))

    def forward(self, x, train=False):
        b, c, h, length = x.shape
        kh, kw, sh, sw = self.kernel_h, self.kernel_w, self.stride_h, self.stride_w
        hout, lout = conv_out_len(h, kh, sh), conv_out_len(length, kw, sw)
        if c != self.in_ch or hout < 1 or lout < 1:
            raise ValueError(f"Conv2d{self.config()} cannot take input {x.shape}")
        win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw][:, :, :hout, :lout]
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(b * hout * lout, c * kh * kw)
        w = self.params["weight"].reshape(self.out_ch, -1)
        out = cols @ w.T + self.params["bias"]
        if train:
            self._cache = (cols, x.shape, hout, lout)
        return np.ascontiguousarray(out.reshape(b, hout, lout, self.out_ch).transpose(0, 3, 1, 2))

    def backward(self, dout):
        cols, (b, c, h, length), hout, lout = self._cache
        kh, kw, sh, sw = self.kernel_h, self.kernel_w, self.stride_h, self.stride_w
        d = dout.transpose(0, 2, 3, 1).reshape(b * hout * lout, self.out_ch)
        w = self.params["weight"].reshape(self.out_ch, -1)
        self.grads["weight"] = (d.T @ cols).reshape(self.params["weight"].shape)
        self.grads["bias"] = dout.sum(axis=(0, 2, 3))
        dcols = (d @ w).reshape(b, hout, lout, c, kh, kw)
        dx = np.zeros((b, c, h, length), dtype=dout.dtype)
        hspan, lspan = sh * (hout - 1) + 1, sw * (lout - 1) + 1
        for i in range(kh):
            for j in range(kw):
                dx[:, :, i:i + hspan:sh, j:j + lspan:sw] += dcols[..., i, j].transpose(0, 3, 1, 2)
        return dx


class SqueezeHeight(Layer):
    """(B, C, 1, L) -> (B, C, L) after a 2-D convolution that collapsed the rows."""

    kind = "squeeze_height"

    def out_shape(self, shape):
        c, h, length = shape
        if h != 1:
            raise ValueError(f"cannot squeeze height {h}")
        return (c, length)

    def forward(self, x, train=False):
        if x.shape[2] != 1:
            raise ValueError(f"cannot squeeze height {x.shape[2]}")
        return x[:, :, 0, :]

    def backward(self, dout):
        return dout[:, :, None, :]


class BatchNorm(Layer):
    """Per-channel batch normalisation over every axis but axis 1."""

    kind = "batchnorm"
    fields = ("channels", "eps", "momentum")

    def __init__(self, channels, eps=1e-5, momentum=0.1):
        super().__init__()
        self.channels, self.eps, self.momentum = channels, eps, momentum

    def init_params(self, rng, dtype):
        c = self.channels
        self.params["gamma"] = np.ones(c, dtype)
        self.params["beta"] = np.zeros(c, dtype)
        self.buffers["running_mean"] = np.zeros(c, dtype)
        self.buffers["running_var"] = np.ones(c, dtype)

    def out_shape(self, shape):
        if shape[0] != self.channels:
            raise ValueError(f"BatchNorm expects {self.channels} channels, got {shape[0]}")
        return shape

    def forward(self, x, train=False):
        axes = (0,) + tuple(range(2, x.ndim))
        bshape = (1, -1) + (1,) * (x.ndim - 2)
        gamma = self.params["gamma"].reshape(bshape)
        beta = self.params["beta"].reshape(bshape)
        if train:
            mean = x.mean(axis=axes)
            diff = x - mean.reshape(bshape)
            var = np.square(diff).mean(axis=axes)
            count = x.size // x.shape[1]
            m = self.momentum
            rm, rv = self.buffers["running_mean"], self.buffers["running_var"]
            unbiased = var * count / max(count - 1, 1)
            rm *= 1 - m
            rm += m * mean.astype(rm.dtype)
            rv *= 1 - m
            rv += m * unbiased.astype(rv.dtype)
        else:
            diff = x - self.buffers["running_mean"].reshape(bshape)
            var = self.buffers["running_var"]
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = diff * inv_std.reshape(bshape)
        self._cache = (xhat, inv_std, axes, bshape, train)
        return gamma * xhat + beta

    def backward(self, dout):
        xhat, inv_std, axes, bshape, train = self._cache
        gamma = self.params["gamma"].reshape(bshape)
        self.grads["gamma"] = (dout * xhat).sum(axis=axes)
        self.grads["beta"] = dout.sum(axis=axes)
        if not train:
            # running statistics are constants
            return dout * gamma * inv_std.reshape(bshape)
        count = dout.size // dout.shape[1]
        dxhat = dout * gamma
        s1 = dxhat.sum(axis=axes).reshape(bshape)
        s2 = (dxhat * xhat).sum(axis=axes).reshape(bshape)
        return (inv_std.reshape(bshape) / count) * (count * dxhat - s1 - xhat * s2)


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, train=False):
        mask = x > 0
        if train:
            self._cache = mask
        return x * mask

    def backward(self, dout):
        return dout * self._cache


class MaxPool1d(Layer):
    """Max pooling along the last axis; ties route the gradient to the first maximum."""

    kind = "maxpool1d"
    fields = ("kernel", "stride")

    def __init__(self, kernel, stride):
        super().__init__()
        self.kernel, self.stride = kernel, stride

    def out_shape(self, shape):
        c, length = shape
        return (c, conv_out_len(length, self.kernel, self.stride))

    def forward(self, x, train=False):
        length = x.shape[-1]
        k, s = self.kernel, self.stride
        lout = conv_out_len(length, k, s)
        if lout < 1:
            raise ValueError(f"MaxPool1d{self.config()} cannot take length {length}")
        span = s * (lout - 1) + 1
        out = x[..., 0:span:s].copy()
        idx = np.zeros(out.shape, np.int8)
        for j in range(1, k):
            v = x[..., j:j + span:s]
            # strict comparison keeps the first maximum on ties
            better = v > out
            idx = np.where(better, np.int8(j), idx)
            out = np.maximum(out, v)
        if train:
            self._cache = (idx, x.shape)
        return out

    def backward(self, dout):
        idx, shape = self._cache
        k, s = self.kernel, self.stride
        lout = dout.shape[-1]
        dx = np.zeros(shape, dtype=dout.dtype)
        span = s * (lout - 1) + 1
        for j in range(k):
            dx[..., j:j + span:s] += dout * (idx == j)
        return dx


class Flatten(Layer):
    kind = "flatten"

    def out_shape(self, shape):
        return (int(np.prod(shape)),)

    def forward(self, x, train=False):
        if train:
            self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._cache)


class ConcatExtras(Layer):
    """Append per-example extra features (the RR intervals) to a flat vector."""

    kind = "concat_extras"
    fields = ("n_extra",)

    def __init__(self, n_extra):
        super().__init__()
        self.n_extra = n_extra

    def out_shape(self, shape):
        return (shape[0] + self.n_extra,)

    def forward(self, x, extras=None, train=False):
        if extras is None or extras.shape != (x.shape[0], self.n_extra):
            got = None if extras is None else extras.shape
            raise ValueError(f"expected extras of shape ({x.shape[0]}, {self.n_extra}), got {got}")
        return np.concatenate([x, extras.astype(x.dtype, copy=False)], axis=1)

    def backward(self, dout):
        self.extras_grad = dout[:, -self.n_extra:]
        return dout[:, :-self.n_extra]


class Dense(Layer):
    kind = "dense"
    fields = ("in_features", "out_features")

    def __init__(self, in_features, out_features):
        super().__init__()
        self.in_features, self.out_features = in_features, out_features

    def init_params(self, rng, dtype):
        fan_in = self.in_features
        self.params["weight"] = _fan_in_uniform(rng, (self.out_features, fan_in), fan_in, dtype)
        self.params["bias"] = _fan_in_uniform(rng, (self.out_features,), fan_in, dtype)

    def out_shape(self, shape):
        if shape != (self.in_features,):
            raise ValueError(f"Dense expects ({self.in_features},), got {shape}")
        return (self.out_features,)

    def forward(self, x, train=False):
        if train:
            self._cache = x
        return x @ self.params["weight"].T + self.params["bias"]

    def backward(self, dout):
        x = self._cache
        self.grads["weight"] = dout.T @ x
        self.grads["bias"] = dout.sum(axis=0)
        return dout @ self.params["weight"]


LAYER_TYPES = {cls.kind: cls for cls in
               (Conv1d, Conv2d, SqueezeHeight, BatchNorm, ReLU, MaxPool1d, Flatten, ConcatExtras, Dense)}


def make_layer(kind: str, **cfg) -> Layer:
    if kind not in LAYER_TYPES:
        raise ValueError(f"unknown layer kind {kind!r}")
    cls = LAYER_TYPES[kind]
    if cls is Conv2d:
        return Conv2d(cfg["in_ch"], cfg["out_ch"], (cfg["kernel_w"], cfg["kernel_h"]),
                      (cfg["stride_w"], cfg["stride_h"]))
    return cls(**cfg)


def softmax_cross_entropy(logits, labels, weight=1.0):
    """Mean cross-entropy loss and its gradient with respect to the logits."""
    logits = np.asarray(logits)
    labels = np.asarray(labels, dtype=np.int64)
    shifted = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logsum
    b = logits.shape[0]
    loss = -logp[np.arange(b), labels].mean() * weight
    grad = np.exp(logp)
    grad[np.arange(b), labels] -= 1
    grad *= weight / b
    return float(loss), grad.astype(logits.dtype, copy=False)
