"""Deterministic NN building blocks over (batch, length, channels) arrays.

Every layer caches what its backward pass needs during forward; parameters
and accumulated gradients live in per-layer dicts keyed by short names so a
model can expose a flat named-tensor view for the optimizer and checkpoints.
"""

from __future__ import annotations

import numpy as np

from . import backend

__all__ = [
    "Layer",
    "Conv1D",
    "BatchNorm",
    "ReLU",
    "MaxPool3s2",
    "GlobalPool",
    "BitHeads",
    "dense_concat",
    "dense_split",
    "softmax_xent",
    "relu",
    "maxpool_3s2",
    "global_pool",
]


class Layer:
    """Minimal layer protocol: params/grads dicts plus forward/backward."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def zero_grads(self):
        for k in self.params:
            self.grads[k] = np.zeros_like(self.params[k])

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, gy: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class Conv1D(Layer):
    """Same-length 1-D convolution, odd kernel, stride 1, zero padding."""

    def __init__(self, c_in: int, c_out: int, kernel: int = 5, rng=None, dtype=np.float32):
        super().__init__()
        if kernel % 2 == 0:
            raise ValueError("kernel width must be odd")
        self.c_in, self.c_out, self.kernel = c_in, c_out, kernel
        rng = rng or np.random.default_rng(0)
        std = np.sqrt(2.0 / (kernel * c_in))
        self.params["w"] = rng.normal(0.0, std, (kernel, c_in, c_out)).astype(dtype)
        self.params["b"] = np.zeros(c_out, dtype=dtype)
        self.zero_grads()
        self._x = None

    def forward(self, x, train=False):
        if x.shape[2] != self.c_in:
            raise ValueError(f"expected {self.c_in} input channels, got {x.shape[2]}")
        self._x = x
        return backend.conv1d_forward(x, self.params["w"], self.params["b"])

    def backward(self, gy):
        gx, gw, gb = backend.conv1d_backward(self._x, self.params["w"], gy)
        self.grads["w"] += gw
        self.grads["b"] += gb
        return gx


class BatchNorm(Layer):
    """Per-channel normalization over (batch x length) with scale/offset.

    Training uses minibatch statistics and updates running estimates by EMA;
    inference normalizes with the running estimates.
    """

    def __init__(self, channels: int, eps: float = 1e-5, ema: float = 0.9, dtype=np.float32):
        super().__init__()
        self.channels = channels
        self.eps = eps
        self.ema = ema
        self.params["scale"] = np.ones(channels, dtype=dtype)
        self.params["offset"] = np.zeros(channels, dtype=dtype)
        self.buffers["running_mean"] = np.zeros(channels, dtype=dtype)
        self.buffers["running_var"] = np.ones(channels, dtype=dtype)
        self.zero_grads()
        self._cache = None

    def forward(self, x, train=False):
        if train:
            m = x.shape[0] * x.shape[1]
            if m < 2:
                raise ValueError("batch x length must be >= 2 in train mode")
            mean = x.mean(axis=(0, 1))
            var = x.var(axis=(0, 1))
            self.buffers["running_mean"] = (
                self.ema * self.buffers["running_mean"] + (1.0 - self.ema) * mean
            ).astype(x.dtype)
            self.buffers["running_var"] = (
                self.ema * self.buffers["running_var"] + (1.0 - self.ema) * var
            ).astype(x.dtype)
        else:
            mean = self.buffers["running_mean"]
            var = self.buffers["running_var"]
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv
        self._cache = (xhat, inv, train, x.shape[0] * x.shape[1])
        return self.params["scale"] * xhat + self.params["offset"]

    def backward(self, gy):
        xhat, inv, train, m = self._cache
        self.grads["scale"] += (gy * xhat).sum(axis=(0, 1))
        self.grads["offset"] += gy.sum(axis=(0, 1))
        gxhat = gy * self.params["scale"]
        if not train:
            return gxhat * inv
        # batch statistics contribute through mean and variance
        term_mean = gxhat.mean(axis=(0, 1))
        term_cov = (gxhat * xhat).mean(axis=(0, 1))
        return inv * (gxhat - term_mean - xhat * term_cov)


class ReLU(Layer):
    def __init__(self):
        super().__init__()
        self._mask = None

    def forward(self, x, train=False):
        self._mask = x > 0
        return x * self._mask

    def backward(self, gy):
        return gy * self._mask


class MaxPool3s2(Layer):
    """Window 3, stride 2, symmetric pad 1 (as -inf); output length ceil(H/2).

    Gradient routes to the earliest maximal index within each window.
    """

    def __init__(self):
        super().__init__()
        self._cache = None

    def forward(self, x, train=False):
        batch, length, ch = x.shape
        if length < 2:
            raise ValueError("input length must be >= 2")
        out_len = -(-length // 2)
        neg = np.array(-np.inf, dtype=x.dtype)
        x_pad = np.pad(x, ((0, 0), (1, 1), (0, 0)), constant_values=neg)
        starts = 2 * np.arange(out_len)
        windows = np.stack([x_pad[:, starts + j, :] for j in range(3)], axis=2)
        arg = windows.argmax(axis=2)
        out = np.take_along_axis(windows, arg[:, :, None, :], axis=2)[:, :, 0, :]
        self._cache = (arg, starts, x.shape)
        return out

    def backward(self, gy):
        arg, starts, shape = self._cache
        batch, length, ch = shape
        # absolute index in the padded axis, shifted back by the left pad
        src = starts[None, :, None] + arg - 1
        b_idx = np.arange(batch)[:, None, None]
        c_idx = np.arange(ch)[None, None, :]
        flat = (b_idx * length + src) * ch + c_idx
        gx = np.bincount(
            flat.reshape(-1), weights=gy.reshape(-1).astype(np.float64), minlength=batch * length * ch
        )
        return gx.reshape(batch, length, ch).astype(gy.dtype)


class GlobalPool(Layer):
    """Concatenation of per-channel global max and global mean over length."""

    def __init__(self):
        super().__init__()
        self._cache = None

    def forward(self, x, train=False):
        arg = x.argmax(axis=1)
        mx = np.take_along_axis(x, arg[:, None, :], axis=1)[:, 0, :]
        mean = x.mean(axis=1)
        self._cache = (arg, x.shape)
        return np.concatenate([mx, mean], axis=1)

    def backward(self, gy):
        arg, shape = self._cache
        batch, length, ch = shape
        g_max, g_mean = gy[:, :ch], gy[:, ch:]
        gx = np.repeat(g_mean[:, None, :], length, axis=1) / length
        b_idx = np.arange(batch)[:, None]
        c_idx = np.arange(ch)[None, :]
        np.add.at(gx, (b_idx, arg, c_idx), g_max)
        return gx.astype(gy.dtype)


def dense_concat(inputs: list[np.ndarray]) -> np.ndarray:
    """Channel-wise concatenation of equal-shape feature maps."""

    base = inputs[0].shape[:2]
    for arr in inputs[1:]:
        if arr.shape[:2] != base:
            raise ValueError("all inputs must share batch and length")
    return np.concatenate(inputs, axis=2)


def dense_split(gy: np.ndarray, widths: list[int]) -> list[np.ndarray]:
    """Split a concatenated gradient back into per-input parts."""

    return np.split(gy, np.cumsum(widths)[:-1], axis=2)


class BitHeads(Layer):
    """M independent affine maps from the pooled feature vector to 2 logits."""

    def __init__(self, feat_dim: int, n_bits: int, rng=None, dtype=np.float32):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.feat_dim, self.n_bits = feat_dim, n_bits
        std = np.sqrt(2.0 / feat_dim)
        self.params["w"] = rng.normal(0.0, std, (n_bits, feat_dim, 2)).astype(dtype)
        self.params["b"] = np.zeros((n_bits, 2), dtype=dtype)
        self.zero_grads()
        self._feat = None

    def forward(self, feat, train=False):
        self._feat = feat
        return np.einsum("bf,mfk->bmk", feat, self.params["w"], optimize=True) + self.params["b"]

    def backward(self, g_logits):
        self.grads["w"] += np.einsum("bf,bmk->mfk", self._feat, g_logits, optimize=True)
        self.grads["b"] += g_logits.sum(axis=0)
        return np.einsum("bmk,mfk->bf", g_logits, self.params["w"], optimize=True)


def softmax_xent(logits: np.ndarray, labels: np.ndarray):
    """Mean-over-batch sum of per-head binary cross-entropies.

    logits: (B, M, 2); labels: (B, M) bits in {0, 1}. Returns
    (loss, probabilities, grad wrt logits).
    """

    z = logits - logits.max(axis=2, keepdims=True)
    ez = np.exp(z)
    probs = ez / ez.sum(axis=2, keepdims=True)
    logp = z - np.log(ez.sum(axis=2, keepdims=True))
    batch = logits.shape[0]
    onehot = np.zeros_like(probs)
    b_idx = np.arange(batch)[:, None]
    m_idx = np.arange(logits.shape[1])[None, :]
    onehot[b_idx, m_idx, labels.astype(np.int64)] = 1.0
    loss = float(-(onehot * logp).sum() / batch)
    grad = (probs - onehot) / batch
    return loss, probs, grad.astype(logits.dtype)


# Functional aliases for the stateless operations.


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def maxpool_3s2(x: np.ndarray) -> np.ndarray:
    return MaxPool3s2().forward(x)


def global_pool(x: np.ndarray) -> np.ndarray:
    return GlobalPool().forward(x)
