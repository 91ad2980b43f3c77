"""Shared test machinery: finite-difference gradient checks for every layer.

Each case builder returns the worst elementwise relative error between the
analytic backward pass and central differences, over the layer's input(s)
and all of its parameters.
"""

import zlib

import numpy as np

from staynet.nn import (
    Activation,
    BiLstmLayer,
    Conv1d,
    Dense,
    GruCell,
    GruStack,
    LstmCell,
    LstmStack,
    SelfAttention,
)
from staynet.tensor import Rng, derive_seed

FD_H = 1e-5
REL_FLOOR = 1e-6


def rel_err(analytic, numeric):
    """Max elementwise relative error, floored so zero-vs-zero compares clean."""
    a = np.asarray(analytic, dtype=np.float64)
    b = np.asarray(numeric, dtype=np.float64)
    if a.shape != b.shape:
        raise AssertionError(f"gradient shapes differ: {a.shape} vs {b.shape}")
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), REL_FLOOR)
    return float(np.max(np.abs(a - b) / denom))


def fd_grad(f, x, h=FD_H):
    """Central-difference gradient of scalar-valued f at array x."""
    x = np.asarray(x, dtype=np.float64)
    g = np.empty(x.size)
    for i in range(x.size):
        xp = x.copy()
        xp.reshape(-1)[i] += h
        xm = x.copy()
        xm.reshape(-1)[i] -= h
        g[i] = (f(xp) - f(xm)) / (2.0 * h)
    return g.reshape(x.shape)


def _param_fd(objective, params, grads, worst):
    for p, g in zip(params, grads):
        base = p.copy()

        def f(pv, p=p, base=base):
            p[...] = pv
            val = objective()
            p[...] = base
            return val

        worst = max(worst, rel_err(g, fd_grad(f, base)))
    return worst


def check_layer(layer, x):
    """FD-check a forward/backward layer with upstream = d(sum of outputs)."""
    y, cache = layer.forward(x)
    dx, grads = layer.backward(cache, np.ones_like(y))
    params = layer.params()
    assert len(grads) == len(params)
    worst = rel_err(dx, fd_grad(lambda v: float(layer.forward(v)[0].sum()), x))
    return _param_fd(lambda: float(layer.forward(x)[0].sum()), params, grads, worst)


def check_gru_cell(cell, x, h_prev):
    h2, cache = cell.step(x, h_prev)
    dx, dh_prev, grads = cell.step_backward(cache, np.ones_like(h2))

    def out(xv, hv):
        return float(cell.step(xv, hv)[0].sum())

    worst = rel_err(dx, fd_grad(lambda v: out(v, h_prev), x))
    worst = max(worst, rel_err(dh_prev, fd_grad(lambda v: out(x, v), h_prev)))
    return _param_fd(lambda: out(x, h_prev), cell.params(), grads, worst)


def check_lstm_cell(cell, x, h_prev, c_prev):
    h2, c2, cache = cell.step(x, h_prev, c_prev)
    dx, dh_prev, dc_prev, grads = cell.step_backward(
        cache, np.ones_like(h2), np.ones_like(c2))

    def out(xv, hv, cv):
        h2, c2, _ = cell.step(xv, hv, cv)
        return float(h2.sum() + c2.sum())

    worst = rel_err(dx, fd_grad(lambda v: out(v, h_prev, c_prev), x))
    worst = max(worst, rel_err(dh_prev, fd_grad(lambda v: out(x, v, c_prev), h_prev)))
    worst = max(worst, rel_err(dc_prev, fd_grad(lambda v: out(x, h_prev, v), c_prev)))
    return _param_fd(lambda: out(x, h_prev, c_prev), cell.params(), grads, worst)


def _away_from_kink(rng, shape):
    # relu is non-differentiable at 0; keep inputs clear of it
    mag = rng.uniform(shape, low=0.1, high=1.2)
    sign = np.where(rng.uniform(shape) < 0.5, -1.0, 1.0)
    return mag * sign


def run_grad_case(kind, seed, shape_idx):
    """Build one randomized instance of a layer kind and FD-check it."""
    rng = Rng(derive_seed(seed, shape_idx, zlib.crc32(kind.encode())))
    if kind == "dense":
        b, i, o = [(2, 3, 4), (1, 5, 2), (4, 2, 3)][shape_idx]
        layer = Dense.init(rng, i, o)
        return check_layer(layer, rng.normal((b, i)))
    if kind.startswith("activation"):
        act = kind.split("-", 1)[1]
        shape = [(3, 4), (2, 7), (5, 1)][shape_idx]
        x = _away_from_kink(rng, shape) if act == "relu" else rng.normal(shape)
        return check_layer(Activation(act), x)
    if kind == "conv1d-valid":
        b, c, length, f, k = [(2, 1, 5, 3, 2), (1, 2, 6, 2, 3), (3, 3, 4, 2, 1)][shape_idx]
        layer = Conv1d.init(rng, c, f, k, padding="valid")
        return check_layer(layer, rng.normal((b, c, length)))
    if kind == "conv1d-same":
        b, c, length, f, k = [(2, 1, 5, 3, 3), (1, 2, 6, 2, 4), (2, 3, 3, 4, 2)][shape_idx]
        layer = Conv1d.init(rng, c, f, k, padding="same")
        return check_layer(layer, rng.normal((b, c, length)))
    if kind == "gru-cell":
        b, i, h = [(2, 3, 4), (1, 1, 1), (3, 5, 2)][shape_idx]
        cell = GruCell.init(rng, i, h)
        return check_gru_cell(cell, rng.normal((b, i)), rng.normal((b, h)))
    if kind == "gru-stack":
        b, t, i, h, depth = [(2, 3, 2, 3, 2), (1, 4, 1, 2, 1), (2, 2, 3, 2, 2)][shape_idx]
        stack = GruStack.init(rng, i, h, depth)
        return check_layer(stack, rng.normal((b, t, i)))
    if kind == "lstm-cell":
        b, i, h = [(2, 3, 4), (1, 1, 1), (3, 2, 2)][shape_idx]
        cell = LstmCell.init(rng, i, h)
        return check_lstm_cell(cell, rng.normal((b, i)), rng.normal((b, h)),
                               rng.normal((b, h)))
    if kind == "lstm-stack":
        b, t, i, h, depth = [(2, 3, 2, 2, 2), (1, 2, 3, 2, 1), (2, 4, 1, 3, 2)][shape_idx]
        stack = LstmStack.init(rng, i, h, depth)
        return check_layer(stack, rng.normal((b, t, i)))
    if kind == "bilstm":
        b, t, i, h = [(2, 3, 2, 2), (1, 1, 2, 3), (2, 4, 3, 1)][shape_idx]
        layer = BiLstmLayer.init(rng, i, h)
        return check_layer(layer, rng.normal((b, t, i)))
    if kind == "attention":
        b, t, d = [(2, 3, 4), (1, 1, 3), (3, 5, 2)][shape_idx]
        layer = SelfAttention.init(rng, d)
        return check_layer(layer, rng.normal((b, t, d)))
    raise ValueError(f"unknown gradient case {kind!r}")


GRAD_KINDS = (
    "dense",
    "activation-relu",
    "activation-sigmoid",
    "activation-tanh",
    "activation-linear",
    "conv1d-valid",
    "conv1d-same",
    "gru-cell",
    "gru-stack",
    "lstm-cell",
    "lstm-stack",
    "bilstm",
    "attention",
)


def knn_impute_oracle(dataset, k, key_columns):
    """Brute-force reference for knn imputation: pure Python loops.

    Candidates are rows observed in the imputed column with every key
    observed; distance is Euclidean over the query's observed keys after
    rank-encoding and min-max scaling; ties sort by candidate row index.
    """
    from collections import Counter

    n = dataset.n_rows
    keyvals = []
    keyobs = []
    for name in key_columns:
        col = dataset[name]
        spec = dataset.schema[name]
        raw = []
        for i in range(n):
            if col.mask[i]:
                raw.append(None)
            elif col.is_numeric:
                raw.append(float(col.values[i]))
            else:
                raw.append(float(sorted(spec.categories).index(col.values[i])))
        seen = [v for v in raw if v is not None]
        lo, hi = (min(seen), max(seen)) if seen else (0.0, 0.0)
        scaled = []
        for v in raw:
            if v is None:
                scaled.append(None)
            elif hi > lo:
                scaled.append((v - lo) / (hi - lo))
            else:
                scaled.append(0.0)
        keyvals.append(scaled)
        keyobs.append([v is not None for v in raw])

    nk = len(key_columns)
    out = dataset.copy()
    for name in dataset.schema.names():
        col = dataset[name]
        if not col.mask.any():
            continue
        cands = [j for j in range(n)
                 if not col.mask[j] and all(keyobs[t][j] for t in range(nk))]
        for i in range(n):
            if not col.mask[i]:
                continue
            used = [t for t in range(nk) if keyobs[t][i]]
            scored = sorted(
                (sum((keyvals[t][j] - keyvals[t][i]) ** 2 for t in used), j)
                for j in cands)
            near = [j for _, j in scored[:k]]
            ocol = out[name]
            if col.is_numeric:
                ocol.values[i] = float(np.mean([col.values[j] for j in near]))
            else:
                counts = Counter(str(col.values[j]) for j in near)
                ocol.values[i] = min(counts.items(), key=lambda kv: (-kv[1], kv[0]))[0]
            ocol.mask[i] = False
    return out
