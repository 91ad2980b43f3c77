"""Feed-forward building blocks: dense, activations, 1-d convolution.

Every layer follows one protocol:

    y, cache = layer.forward(x)          x, y are float64 ndarrays
    dx, grads = layer.backward(cache, g) grads aligned with layer.params()

The cache records exactly the intermediates the backward pass needs and
carries a reference to its layer, so a cache handed to the wrong layer (or
reused after the layer was rebuilt) fails loudly instead of silently
producing wrong gradients.
"""

from __future__ import annotations

import numpy as np

from ..tensor import ShapeError, glorot_uniform


class StaleCacheError(RuntimeError):
    """Raised when a backward pass gets a cache from a different layer."""


def _guard_cache(layer, cache):
    if cache[0] is not layer:
        raise StaleCacheError(
            f"cache belongs to {type(cache[0]).__name__}, not this {type(layer).__name__}"
        )


class Dense:
    """Affine map y = x @ W.T + b with W of shape [out, in]."""

    def __init__(self, weights, bias):
        w = np.asarray(weights, dtype=np.float64)
        b = np.asarray(bias, dtype=np.float64)
        if w.ndim != 2 or b.ndim != 1 or b.shape[0] != w.shape[0]:
            raise ShapeError(f"dense wants W[out,in], b[out]; got {w.shape}, {b.shape}")
        self.w = w
        self.b = b

    @classmethod
    def init(cls, rng, n_in, n_out):
        w = glorot_uniform(rng, n_in, n_out, (n_out, n_in))
        return cls(w, np.zeros(n_out))

    @property
    def n_in(self):
        return self.w.shape[1]

    @property
    def n_out(self):
        return self.w.shape[0]

    def params(self):
        return [self.w, self.b]

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.w.shape[1]:
            raise ShapeError(f"dense input {x.shape} vs W {self.w.shape}")
        y = x @ self.w.T + self.b
        return y, (self, x)

    def backward(self, cache, g):
        _guard_cache(self, cache)
        _, x = cache
        if g.shape != (x.shape[0], self.w.shape[0]):
            raise ShapeError(f"dense grad {g.shape} vs output {(x.shape[0], self.w.shape[0])}")
        dw = g.T @ x
        db = g.sum(axis=0)
        dx = g @ self.w
        return dx, [dw, db]


def _relu(x):
    return np.maximum(0.0, x)


def _relu_grad(x, y):
    return (x > 0.0).astype(np.float64)


def _sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _sigmoid_grad(x, y):
    return y * (1.0 - y)


def _tanh_grad(x, y):
    return 1.0 - y * y


_ACTIVATIONS = {
    "relu": (_relu, _relu_grad),
    "sigmoid": (_sigmoid, _sigmoid_grad),
    "tanh": (np.tanh, _tanh_grad),
    "linear": (lambda x: x, lambda x, y: np.ones_like(x)),
}


def activation_names():
    return sorted(_ACTIVATIONS)


class Activation:
    """Elementwise nonlinearity; kind is one of relu|sigmoid|tanh|linear."""

    def __init__(self, kind):
        if kind not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {kind!r}, expected one of {activation_names()}")
        self.kind = kind
        self._fn, self._grad = _ACTIVATIONS[kind]

    def params(self):
        return []

    def forward(self, x):
        y = self._fn(x)
        return y, (self, x, y)

    def backward(self, cache, g):
        _guard_cache(self, cache)
        _, x, y = cache
        if g.shape != y.shape:
            raise ShapeError(f"activation grad {g.shape} vs output {y.shape}")
        return g * self._grad(x, y), []


def sigmoid(x):
    return _sigmoid(np.asarray(x, dtype=np.float64))


def conv1d_pad(length, kernel, padding):
    """(pad_left, pad_right, out_length) for a given padding mode."""
    if padding == "valid":
        out = length - kernel + 1
        if out <= 0:
            raise ShapeError(f"kernel {kernel} does not fit length {length} with valid padding")
        return 0, 0, out
    if padding == "same":
        return (kernel - 1) // 2, kernel // 2, length
    raise ValueError(f"unknown padding {padding!r}, expected 'valid' or 'same'")


class Conv1d:
    """1-d convolution (cross-correlation) over [batch, channels, length].

    Kernels have shape [filters, channels, kernel]; output channel f at
    position t is sum_{c,u} k[f,c,u] * x[c, t+u-pad_left] plus bias[f].
    """

    def __init__(self, kernels, bias, padding="same"):
        k = np.asarray(kernels, dtype=np.float64)
        b = np.asarray(bias, dtype=np.float64)
        if k.ndim != 3 or b.ndim != 1 or b.shape[0] != k.shape[0]:
            raise ShapeError(f"conv1d wants K[f,c,k], b[f]; got {k.shape}, {b.shape}")
        if padding not in ("valid", "same"):
            raise ValueError(f"unknown padding {padding!r}, expected 'valid' or 'same'")
        self.k = k
        self.b = b
        self.padding = padding

    @classmethod
    def init(cls, rng, n_in, filters, kernel, padding="same"):
        fan_in = n_in * kernel
        k = glorot_uniform(rng, fan_in, filters, (filters, n_in, kernel))
        return cls(k, np.zeros(filters), padding)

    @property
    def filters(self):
        return self.k.shape[0]

    @property
    def channels(self):
        return self.k.shape[1]

    @property
    def kernel(self):
        return self.k.shape[2]

    def params(self):
        return [self.k, self.b]

    def forward(self, x):
        if x.ndim != 3 or x.shape[1] != self.channels:
            raise ShapeError(f"conv1d input {x.shape} vs kernels {self.k.shape}")
        if x.shape[0] == 0 or x.shape[2] == 0:
            raise ShapeError(f"conv1d input {x.shape}: empty batch or zero-length sequence")
        pl, pr, out_len = conv1d_pad(x.shape[2], self.kernel, self.padding)
        xp = np.pad(x, ((0, 0), (0, 0), (pl, pr))) if (pl or pr) else x
        # windows[b, c, t, u] = xp[b, c, t+u]
        windows = np.lib.stride_tricks.sliding_window_view(xp, self.kernel, axis=2)
        y = np.einsum("bctu,fcu->bft", windows, self.k, optimize=True) + self.b[None, :, None]
        return y, (self, x, xp, windows, (pl, pr, out_len))

    def backward(self, cache, g):
        _guard_cache(self, cache)
        _, x, xp, windows, (pl, pr, out_len) = cache
        if g.shape != (x.shape[0], self.filters, out_len):
            raise ShapeError(f"conv1d grad {g.shape} vs output {(x.shape[0], self.filters, out_len)}")
        dk = np.einsum("bft,bctu->fcu", g, windows, optimize=True)
        db = g.sum(axis=(0, 2))
        # scatter g back through each window position
        dxp = np.zeros_like(xp)
        contrib = np.einsum("bft,fcu->bctu", g, self.k, optimize=True)
        for u in range(self.kernel):
            dxp[:, :, u:u + out_len] += contrib[:, :, :, u]
        dx = dxp[:, :, pl:pl + x.shape[2]] if (pl or pr) else dxp
        return dx, [dk, db]
