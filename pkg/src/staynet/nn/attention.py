"""Single-head scaled dot-product self-attention over sequences.

For x of shape [batch, steps, d]:

    Q = x Wq,  K = x Wk,  V = x Wv        (square maps, no biases)
    A = softmax(Q K.T / sqrt(d))          rows sum to one
    y = A V                               same shape as x
"""

from __future__ import annotations

import math

import numpy as np

from ..tensor import ShapeError, glorot_uniform
from .layers import StaleCacheError


def softmax_rows(s):
    """Softmax over the last axis, stable against large magnitudes."""
    shifted = s - s.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


class SelfAttention:
    """Self-attention layer keeping sequence shape [batch, steps, d]."""

    def __init__(self, wq, wk, wv):
        self.wq = np.asarray(wq, dtype=np.float64)
        self.wk = np.asarray(wk, dtype=np.float64)
        self.wv = np.asarray(wv, dtype=np.float64)
        d = self.wq.shape[0]
        for w in (self.wq, self.wk, self.wv):
            if w.shape != (d, d):
                raise ShapeError(f"attention weights must be square and equal: got {w.shape}")

    @classmethod
    def init(cls, rng, d):
        return cls(glorot_uniform(rng, d, d, (d, d)),
                   glorot_uniform(rng, d, d, (d, d)),
                   glorot_uniform(rng, d, d, (d, d)))

    @property
    def d(self):
        return self.wq.shape[0]

    def params(self):
        return [self.wq, self.wk, self.wv]

    def forward(self, x):
        if x.ndim != 3 or x.shape[2] != self.d:
            raise ShapeError(f"attention input {x.shape}, expected [batch, steps, {self.d}]")
        if x.shape[0] == 0 or x.shape[1] == 0:
            raise ShapeError(f"attention input {x.shape}: empty batch or zero-length sequence")
        q = x @ self.wq.T
        k = x @ self.wk.T
        v = x @ self.wv.T
        scale = 1.0 / math.sqrt(self.d)
        scores = np.einsum("btd,bsd->bts", q, k, optimize=True) * scale
        a = softmax_rows(scores)
        y = np.einsum("bts,bsd->btd", a, v, optimize=True)
        return y, (self, x, q, k, v, a, scale)

    def backward(self, cache, g):
        if cache[0] is not self:
            raise StaleCacheError("cache belongs to a different attention layer")
        _, x, q, k, v, a, scale = cache
        if g.shape != x.shape:
            raise ShapeError(f"attention grad {g.shape} vs output {x.shape}")
        da = np.einsum("btd,bsd->bts", g, v, optimize=True)
        dv = np.einsum("bts,btd->bsd", a, g, optimize=True)
        # softmax rows: dS = A * (dA - rowsum(dA * A))
        ds = a * (da - (da * a).sum(axis=-1, keepdims=True))
        dq = np.einsum("bts,bsd->btd", ds, k, optimize=True) * scale
        dk = np.einsum("bts,btd->bsd", ds, q, optimize=True) * scale
        dwq = np.einsum("btd,bte->de", dq, x, optimize=True)
        dwk = np.einsum("btd,bte->de", dk, x, optimize=True)
        dwv = np.einsum("btd,bte->de", dv, x, optimize=True)
        dx = dq @ self.wq + dk @ self.wk + dv @ self.wv
        return dx, [dwq, dwk, dwv]
