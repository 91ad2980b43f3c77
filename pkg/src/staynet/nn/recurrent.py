"""Recurrent cells and stacks: GRU, LSTM, bidirectional LSTM.

Gate conventions, with W* acting on the step input and U* on the carried
state (all matmuls follow the x @ W.T layout used by Dense):

    GRU   z = sig(x Wz + h Uz + bz)         update gate
          r = sig(x Wr + h Ur + br)         reset gate
          hc = tanh(x Wh + (r*h) Uh + bh)   candidate, reset applied inside
          h' = (1-z)*h + z*hc

    LSTM  i, f, o = sig gates, g = tanh candidate
          c' = f*c + i*g
          h' = o * tanh(c')

Stacks run layer by layer over [batch, steps, features] sequences and
return the full output sequence; callers that want only the final state
take the last step.  Initial states are zeros.
"""

from __future__ import annotations

import numpy as np

from ..tensor import ShapeError, glorot_uniform
from .layers import StaleCacheError, _sigmoid


def _guard(owner, cache):
    if cache[0] is not owner:
        raise StaleCacheError(
            f"cache belongs to {type(cache[0]).__name__}, not this {type(owner).__name__}"
        )


class GruCell:
    """Single GRU step over a batch of rows."""

    def __init__(self, wz, uz, bz, wr, ur, br, wh, uh, bh):
        self.wz, self.uz, self.bz = (np.asarray(p, dtype=np.float64) for p in (wz, uz, bz))
        self.wr, self.ur, self.br = (np.asarray(p, dtype=np.float64) for p in (wr, ur, br))
        self.wh, self.uh, self.bh = (np.asarray(p, dtype=np.float64) for p in (wh, uh, bh))
        h, i = self.wz.shape
        for w in (self.wr, self.wh):
            if w.shape != (h, i):
                raise ShapeError(f"gru W shapes differ: {w.shape} vs {(h, i)}")
        for u in (self.uz, self.ur, self.uh):
            if u.shape != (h, h):
                raise ShapeError(f"gru U shape {u.shape}, expected {(h, h)}")
        for b in (self.bz, self.br, self.bh):
            if b.shape != (h,):
                raise ShapeError(f"gru bias shape {b.shape}, expected {(h,)}")

    @classmethod
    def init(cls, rng, n_in, n_hidden):
        def w():
            return glorot_uniform(rng, n_in, n_hidden, (n_hidden, n_in))

        def u():
            return glorot_uniform(rng, n_hidden, n_hidden, (n_hidden, n_hidden))

        z = np.zeros(n_hidden)
        wz, uz = w(), u()
        wr, ur = w(), u()
        wh, uh = w(), u()
        return cls(wz, uz, z, wr, ur, z.copy(), wh, uh, z.copy())

    @property
    def n_in(self):
        return self.wz.shape[1]

    @property
    def n_hidden(self):
        return self.wz.shape[0]

    def params(self):
        return [self.wz, self.uz, self.bz, self.wr, self.ur, self.br, self.wh, self.uh, self.bh]

    def step(self, x, h, x_pre=None):
        """One step: (x[B,I], h[B,H]) -> (h'[B,H], cache).

        x_pre optionally carries precomputed (x Wz + bz, x Wr + br, x Wh + bh)
        so sequence runs can batch the input-side matmuls across steps.
        """
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ShapeError(f"gru step input {x.shape}, expected [batch, {self.n_in}]")
        if h.shape != (x.shape[0], self.n_hidden):
            raise ShapeError(f"gru step state {h.shape}, expected {(x.shape[0], self.n_hidden)}")
        if x_pre is None:
            az_x = x @ self.wz.T + self.bz
            ar_x = x @ self.wr.T + self.br
            ah_x = x @ self.wh.T + self.bh
        else:
            az_x, ar_x, ah_x = x_pre
        z = _sigmoid(az_x + h @ self.uz.T)
        r = _sigmoid(ar_x + h @ self.ur.T)
        rh = r * h
        hc = np.tanh(ah_x + rh @ self.uh.T)
        h2 = (1.0 - z) * h + z * hc
        return h2, (self, x, h, z, r, rh, hc)

    def step_backward(self, cache, dh2):
        """Gradient of one step: returns (dx, dh_prev, grads in params() order)."""
        _guard(self, cache)
        _, x, h, z, r, rh, hc = cache
        if dh2.shape != h.shape:
            raise ShapeError(f"gru grad {dh2.shape} vs state {h.shape}")
        dz = dh2 * (hc - h)
        dhc = dh2 * z
        dh = dh2 * (1.0 - z)

        da_h = dhc * (1.0 - hc * hc)
        drh = da_h @ self.uh
        dh += drh * r
        dr = drh * h
        dwh = da_h.T @ x
        duh = da_h.T @ rh
        dbh = da_h.sum(axis=0)

        da_r = dr * r * (1.0 - r)
        dh += da_r @ self.ur
        dwr = da_r.T @ x
        dur = da_r.T @ h
        dbr = da_r.sum(axis=0)

        da_z = dz * z * (1.0 - z)
        dh += da_z @ self.uz
        dwz = da_z.T @ x
        duz = da_z.T @ h
        dbz = da_z.sum(axis=0)

        dx = da_z @ self.wz + da_r @ self.wr + da_h @ self.wh
        return dx, dh, [dwz, duz, dbz, dwr, dur, dbr, dwh, duh, dbh]


class LstmCell:
    """Single LSTM step with input/forget/output gates and tanh candidate."""

    def __init__(self, wi, ui, bi, wf, uf, bf, wo, uo, bo, wg, ug, bg):
        names = ("wi", "ui", "bi", "wf", "uf", "bf", "wo", "uo", "bo", "wg", "ug", "bg")
        for name, p in zip(names, (wi, ui, bi, wf, uf, bf, wo, uo, bo, wg, ug, bg)):
            setattr(self, name, np.asarray(p, dtype=np.float64))
        h, i = self.wi.shape
        for w in (self.wf, self.wo, self.wg):
            if w.shape != (h, i):
                raise ShapeError(f"lstm W shapes differ: {w.shape} vs {(h, i)}")
        for u in (self.ui, self.uf, self.uo, self.ug):
            if u.shape != (h, h):
                raise ShapeError(f"lstm U shape {u.shape}, expected {(h, h)}")
        for b in (self.bi, self.bf, self.bo, self.bg):
            if b.shape != (h,):
                raise ShapeError(f"lstm bias shape {b.shape}, expected {(h,)}")

    @classmethod
    def init(cls, rng, n_in, n_hidden):
        def w():
            return glorot_uniform(rng, n_in, n_hidden, (n_hidden, n_in))

        def u():
            return glorot_uniform(rng, n_hidden, n_hidden, (n_hidden, n_hidden))

        z = np.zeros(n_hidden)
        wi, ui = w(), u()
        wf, uf = w(), u()
        wo, uo = w(), u()
        wg, ug = w(), u()
        return cls(wi, ui, z, wf, uf, z.copy(), wo, uo, z.copy(), wg, ug, z.copy())

    @property
    def n_in(self):
        return self.wi.shape[1]

    @property
    def n_hidden(self):
        return self.wi.shape[0]

    def params(self):
        return [self.wi, self.ui, self.bi, self.wf, self.uf, self.bf,
                self.wo, self.uo, self.bo, self.wg, self.ug, self.bg]

    def step(self, x, h, c, x_pre=None):
        """One step: (x[B,I], h[B,H], c[B,H]) -> (h', c', cache)."""
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ShapeError(f"lstm step input {x.shape}, expected [batch, {self.n_in}]")
        if h.shape != (x.shape[0], self.n_hidden) or c.shape != h.shape:
            raise ShapeError(f"lstm step state {h.shape}/{c.shape}")
        if x_pre is None:
            ai_x = x @ self.wi.T + self.bi
            af_x = x @ self.wf.T + self.bf
            ao_x = x @ self.wo.T + self.bo
            ag_x = x @ self.wg.T + self.bg
        else:
            ai_x, af_x, ao_x, ag_x = x_pre
        i = _sigmoid(ai_x + h @ self.ui.T)
        f = _sigmoid(af_x + h @ self.uf.T)
        o = _sigmoid(ao_x + h @ self.uo.T)
        g = np.tanh(ag_x + h @ self.ug.T)
        c2 = f * c + i * g
        tc = np.tanh(c2)
        h2 = o * tc
        return h2, c2, (self, x, h, c, i, f, o, g, tc)

    def step_backward(self, cache, dh2, dc2):
        """Gradients of one step: (dx, dh_prev, dc_prev, grads)."""
        _guard(self, cache)
        _, x, h, c, i, f, o, g, tc = cache
        if dh2.shape != h.shape or dc2.shape != h.shape:
            raise ShapeError(f"lstm grads {dh2.shape}/{dc2.shape} vs state {h.shape}")
        do = dh2 * tc
        dc = dc2 + dh2 * o * (1.0 - tc * tc)
        di = dc * g
        df = dc * c
        dg = dc * i
        dc_prev = dc * f

        da_i = di * i * (1.0 - i)
        da_f = df * f * (1.0 - f)
        da_o = do * o * (1.0 - o)
        da_g = dg * (1.0 - g * g)

        grads = [da_i.T @ x, da_i.T @ h, da_i.sum(axis=0),
                 da_f.T @ x, da_f.T @ h, da_f.sum(axis=0),
                 da_o.T @ x, da_o.T @ h, da_o.sum(axis=0),
                 da_g.T @ x, da_g.T @ h, da_g.sum(axis=0)]
        dx = da_i @ self.wi + da_f @ self.wf + da_o @ self.wo + da_g @ self.wg
        dh = da_i @ self.ui + da_f @ self.uf + da_o @ self.uo + da_g @ self.ug
        return dx, dh, dc_prev, grads


def _gate_pre(x, w, b):
    # one matmul for the whole sequence: [B,T,I] -> [B,T,H]
    return np.einsum("bti,hi->bth", x, w, optimize=True) + b


def gru_run(cell, x):
    """Run one GRU layer over [B,T,I]; returns (seq[B,T,H], caches)."""
    if x.ndim != 3:
        raise ShapeError(f"gru sequence input must be rank 3, got {x.shape}")
    if x.shape[0] == 0 or x.shape[1] == 0:
        raise ShapeError(f"gru sequence input {x.shape}: empty batch or zero-length sequence")
    n, steps, _ = x.shape
    az = _gate_pre(x, cell.wz, cell.bz)
    ar = _gate_pre(x, cell.wr, cell.br)
    ah = _gate_pre(x, cell.wh, cell.bh)
    h = np.zeros((n, cell.n_hidden))
    seq = np.empty((n, steps, cell.n_hidden))
    caches = []
    for t in range(steps):
        h, cache = cell.step(x[:, t, :], h, x_pre=(az[:, t], ar[:, t], ah[:, t]))
        seq[:, t, :] = h
        caches.append(cache)
    return seq, caches


def gru_run_backward(cell, caches, dseq):
    """Backprop through one GRU layer; dseq is the gradient on every step."""
    n, steps, _ = dseq.shape
    dx = np.empty((n, steps, cell.n_in))
    dh = np.zeros((n, cell.n_hidden))
    totals = [np.zeros_like(p) for p in cell.params()]
    for t in range(steps - 1, -1, -1):
        dxt, dh, grads = cell.step_backward(caches[t], dseq[:, t, :] + dh)
        dx[:, t, :] = dxt
        for acc, g in zip(totals, grads):
            acc += g
    return dx, totals


def lstm_run(cell, x):
    """Run one LSTM layer over [B,T,I]; returns (seq[B,T,H], caches)."""
    if x.ndim != 3:
        raise ShapeError(f"lstm sequence input must be rank 3, got {x.shape}")
    if x.shape[0] == 0 or x.shape[1] == 0:
        raise ShapeError(f"lstm sequence input {x.shape}: empty batch or zero-length sequence")
    n, steps, _ = x.shape
    ai = _gate_pre(x, cell.wi, cell.bi)
    af = _gate_pre(x, cell.wf, cell.bf)
    ao = _gate_pre(x, cell.wo, cell.bo)
    ag = _gate_pre(x, cell.wg, cell.bg)
    h = np.zeros((n, cell.n_hidden))
    c = np.zeros((n, cell.n_hidden))
    seq = np.empty((n, steps, cell.n_hidden))
    caches = []
    for t in range(steps):
        h, c, cache = cell.step(x[:, t, :], h, c, x_pre=(ai[:, t], af[:, t], ao[:, t], ag[:, t]))
        seq[:, t, :] = h
        caches.append(cache)
    return seq, caches


def lstm_run_backward(cell, caches, dseq):
    n, steps, _ = dseq.shape
    dx = np.empty((n, steps, cell.n_in))
    dh = np.zeros((n, cell.n_hidden))
    dc = np.zeros((n, cell.n_hidden))
    totals = [np.zeros_like(p) for p in cell.params()]
    for t in range(steps - 1, -1, -1):
        dxt, dh, dc, grads = cell.step_backward(caches[t], dseq[:, t, :] + dh, dc)
        dx[:, t, :] = dxt
        for acc, g in zip(totals, grads):
            acc += g
    return dx, totals


class GruStack:
    """One or more GRU layers; outputs the top layer's full sequence."""

    def __init__(self, cells):
        if not cells:
            raise ValueError("gru stack needs at least one cell")
        for lower, upper in zip(cells, cells[1:]):
            if upper.n_in != lower.n_hidden:
                raise ShapeError(
                    f"gru stack seam: layer output {lower.n_hidden} feeds input {upper.n_in}"
                )
        self.cells = list(cells)

    @classmethod
    def init(cls, rng, n_in, n_hidden, depth):
        cells = []
        for layer in range(depth):
            cells.append(GruCell.init(rng, n_in if layer == 0 else n_hidden, n_hidden))
        return cls(cells)

    @property
    def n_hidden(self):
        return self.cells[-1].n_hidden

    def params(self):
        return [p for cell in self.cells for p in cell.params()]

    def forward(self, x):
        caches = []
        cur = x
        for cell in self.cells:
            cur, layer_cache = gru_run(cell, cur)
            caches.append(layer_cache)
        return cur, (self, caches)

    def backward(self, cache, dseq):
        _guard(self, cache)
        _, caches = cache
        grads_per_layer = []
        cur = dseq
        for cell, layer_cache in zip(reversed(self.cells), reversed(caches)):
            cur, totals = gru_run_backward(cell, layer_cache, cur)
            grads_per_layer.append(totals)
        grads = [g for totals in reversed(grads_per_layer) for g in totals]
        return cur, grads


class LstmStack:
    """One or more LSTM layers; outputs the top layer's full sequence."""

    def __init__(self, cells):
        if not cells:
            raise ValueError("lstm stack needs at least one cell")
        for lower, upper in zip(cells, cells[1:]):
            if upper.n_in != lower.n_hidden:
                raise ShapeError(
                    f"lstm stack seam: layer output {lower.n_hidden} feeds input {upper.n_in}"
                )
        self.cells = list(cells)

    @classmethod
    def init(cls, rng, n_in, n_hidden, depth):
        cells = []
        for layer in range(depth):
            cells.append(LstmCell.init(rng, n_in if layer == 0 else n_hidden, n_hidden))
        return cls(cells)

    @property
    def n_hidden(self):
        return self.cells[-1].n_hidden

    def params(self):
        return [p for cell in self.cells for p in cell.params()]

    def forward(self, x):
        caches = []
        cur = x
        for cell in self.cells:
            cur, layer_cache = lstm_run(cell, cur)
            caches.append(layer_cache)
        return cur, (self, caches)

    def backward(self, cache, dseq):
        _guard(self, cache)
        _, caches = cache
        grads_per_layer = []
        cur = dseq
        for cell, layer_cache in zip(reversed(self.cells), reversed(caches)):
            cur, totals = lstm_run_backward(cell, layer_cache, cur)
            grads_per_layer.append(totals)
        grads = [g for totals in reversed(grads_per_layer) for g in totals]
        return cur, grads


def bilstm_forward(fwd_cell, bwd_cell, x):
    """Bidirectional LSTM layer: forward pass over x, backward pass over
    reversed x re-reversed to step order, concatenated on the feature axis."""
    if fwd_cell.n_in != bwd_cell.n_in:
        raise ShapeError(
            f"bilstm direction inputs differ: {fwd_cell.n_in} vs {bwd_cell.n_in}"
        )
    seq_f, caches_f = lstm_run(fwd_cell, x)
    seq_b_rev, caches_b = lstm_run(bwd_cell, x[:, ::-1, :])
    seq_b = seq_b_rev[:, ::-1, :]
    return np.concatenate([seq_f, seq_b], axis=2), (caches_f, caches_b)


class BiLstmLayer:
    """One bidirectional LSTM layer; output width is 2 * hidden."""

    def __init__(self, fwd_cell, bwd_cell):
        if fwd_cell.n_hidden != bwd_cell.n_hidden or fwd_cell.n_in != bwd_cell.n_in:
            raise ShapeError("bilstm direction cells must share shapes")
        self.fwd = fwd_cell
        self.bwd = bwd_cell

    @classmethod
    def init(cls, rng, n_in, n_hidden):
        return cls(LstmCell.init(rng, n_in, n_hidden), LstmCell.init(rng, n_in, n_hidden))

    @property
    def n_hidden(self):
        return 2 * self.fwd.n_hidden

    def params(self):
        return self.fwd.params() + self.bwd.params()

    def forward(self, x):
        y, (caches_f, caches_b) = bilstm_forward(self.fwd, self.bwd, x)
        return y, (self, caches_f, caches_b)

    def backward(self, cache, dseq):
        _guard(self, cache)
        _, caches_f, caches_b = cache
        h = self.fwd.n_hidden
        dx_f, grads_f = lstm_run_backward(self.fwd, caches_f, dseq[:, :, :h])
        dx_b_rev, grads_b = lstm_run_backward(self.bwd, caches_b, dseq[:, ::-1, h:])
        return dx_f + dx_b_rev[:, ::-1, :], grads_f + grads_b


class BiLstmStack:
    """Stack of bidirectional LSTM layers."""

    def __init__(self, layers):
        if not layers:
            raise ValueError("bilstm stack needs at least one layer")
        for lower, upper in zip(layers, layers[1:]):
            if upper.fwd.n_in != lower.n_hidden:
                raise ShapeError(
                    f"bilstm stack seam: layer output {lower.n_hidden} feeds input {upper.fwd.n_in}"
                )
        self.layers = list(layers)

    @classmethod
    def init(cls, rng, n_in, n_hidden, depth):
        layers = []
        for i in range(depth):
            layers.append(BiLstmLayer.init(rng, n_in if i == 0 else 2 * n_hidden, n_hidden))
        return cls(layers)

    @property
    def n_hidden(self):
        return self.layers[-1].n_hidden

    def params(self):
        return [p for layer in self.layers for p in layer.params()]

    def forward(self, x):
        caches = []
        cur = x
        for layer in self.layers:
            cur, cache = layer.forward(cur)
            caches.append(cache)
        return cur, (self, caches)

    def backward(self, cache, dseq):
        _guard(self, cache)
        _, caches = cache
        grads_per_layer = []
        cur = dseq
        for layer, layer_cache in zip(reversed(self.layers), reversed(caches)):
            cur, grads = layer.backward(layer_cache, cur)
            grads_per_layer.append(grads)
        grads = [g for gl in reversed(grads_per_layer) for g in gl]
        return cur, grads
