"""Loss, regression metrics, Adam, and the mini-batch training loop.

The training objective is half mean squared error,

    L = (1/2N) sum (y - yhat)^2,    dL/dyhat = (yhat - y) / N,

which matches the reported Loss metric (MSE / 2).  Reported metrics are
MSE, RMSE, Loss, MAE, and the coefficient of determination R; R is left
undefined (None) when the observed values have zero variance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tensor import Rng, ShapeError


class TrainingDivergedError(ArithmeticError):
    """Raised when the loss turns NaN or infinite during training."""


def _pair(y, yhat, what):
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    yhat = np.asarray(yhat, dtype=np.float64).reshape(-1)
    if y.shape != yhat.shape:
        raise ShapeError(f"{what}: observed {y.shape} vs predicted {yhat.shape}")
    if y.size == 0:
        raise ShapeError(f"{what}: empty sample")
    return y, yhat


def half_mse(y, yhat):
    """Half mean squared error (1/2N) sum (y - yhat)^2."""
    y, yhat = _pair(y, yhat, "half_mse")
    d = y - yhat
    return float(d @ d) / (2.0 * y.size)


def half_mse_grad(y, yhat):
    """Gradient of half_mse with respect to yhat: (yhat - y) / N."""
    y, yhat = _pair(y, yhat, "half_mse_grad")
    return (yhat - y) / y.size


@dataclass(frozen=True)
class MetricsReport:
    """Point metrics of one prediction set; r is None when undefined."""

    mse: float
    rmse: float
    loss: float
    mae: float
    r: float | None
    n: int

    def as_dict(self):
        return {"mse": self.mse, "rmse": self.rmse, "loss": self.loss,
                "mae": self.mae, "r": self.r, "n": self.n}


def compute_metrics(y, yhat):
    """MSE, RMSE, Loss (MSE/2), MAE, and R = 1 - SSR/SST."""
    y, yhat = _pair(y, yhat, "compute_metrics")
    d = y - yhat
    mse = float(d @ d) / y.size
    mae = float(np.abs(d).mean())
    sst = float(((y - y.mean()) ** 2).sum())
    if sst == 0.0:
        r = None
    else:
        r = 1.0 - float((d @ d)) / sst
    return MetricsReport(mse=mse, rmse=math.sqrt(mse), loss=mse / 2.0,
                         mae=mae, r=r, n=y.size)


@dataclass
class TrainConfig:
    """Knobs for one training run; defaults follow the reference setup."""

    learning_rate: float = 1e-3
    batch_size: int = 512
    max_epochs: int = 50
    patience: int = 5
    validation_fraction: float = 0.1
    seed: int = 42
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def validate(self):
        if not (self.learning_rate > 0):
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 0:
            raise ValueError(f"max_epochs must be >= 0, got {self.max_epochs}")
        if self.patience < 0:
            raise ValueError(f"patience must be >= 0, got {self.patience}")
        if not (0.0 <= self.validation_fraction < 1.0):
            raise ValueError(
                f"validation_fraction must be in [0, 1), got {self.validation_fraction}"
            )
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must be in [0, 1)")
        if not (self.epsilon > 0):
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        return self


class AdamState:
    """First and second moment accumulators plus the shared step counter."""

    def __init__(self, params):
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.step = 0


def adam_init(params):
    return AdamState(params)


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, epsilon=1e-8):
    """One Adam update, in place on params; returns (params, state).

    update = lr * mhat / (sqrt(vhat) + epsilon) with bias-corrected moments.
    lr = 0 leaves parameters untouched (the moments still advance).
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError(
            f"adam got {len(params)} params, {len(grads)} grads, {len(state.m)} moments"
        )
    state.step += 1
    b1t = 1.0 - beta1 ** state.step
    b2t = 1.0 - beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.shape:
            raise ShapeError(f"grad shape {g.shape} vs param {p.shape}")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / b1t) / (np.sqrt(v / b2t) + epsilon)
    return params, state


@dataclass
class TrainHistory:
    """Per-epoch losses plus where training stopped and which epoch won."""

    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = -1
    stopped_early: bool = False

    def epochs_run(self):
        return len(self.train_loss)


def train_model(model, x, y, config, x_val=None, y_val=None):
    """Fit the model with Adam on half-MSE; returns (model, TrainHistory).

    When no validation set is passed and validation_fraction > 0, the last
    slice of a seeded shuffle is held out.  Validation loss drives early
    stopping (patience consecutive non-improving epochs, patience = 0
    disables it) and best-epoch weights are restored at the end.  A NaN or
    infinite loss aborts with the epoch and batch named.
    """
    config.validate()
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ShapeError(f"training data {x.shape} vs targets {y.shape}")
    if x.shape[0] == 0:
        raise ShapeError("cannot train on an empty dataset")

    rng = Rng(config.seed)
    if x_val is None and config.validation_fraction > 0.0:
        n_val = int(x.shape[0] * config.validation_fraction)
        order = rng.permutation(x.shape[0])
        if n_val > 0:
            train_idx, val_idx = order[:-n_val], order[-n_val:]
            x_val, y_val = x[val_idx], y[val_idx]
            x, y = x[train_idx], y[train_idx]
        else:
            x, y = x[order], y[order]
    elif x_val is not None:
        x_val = np.asarray(x_val, dtype=np.float64)
        y_val = np.asarray(y_val, dtype=np.float64).reshape(-1)
        if x_val.ndim != 2 or x_val.shape[0] != y_val.shape[0]:
            raise ShapeError(f"validation data {x_val.shape} vs targets {y_val.shape}")

    has_val = x_val is not None and x_val.shape[0] > 0
    n = x.shape[0]
    params = model.params()
    state = adam_init(params)
    history = TrainHistory()
    best_val = math.inf
    best_snapshot = None
    bad_epochs = 0

    for epoch in range(config.max_epochs):
        order = rng.permutation(n)
        total = 0.0
        for bi, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start:start + config.batch_size]
            xb, yb = x[idx], y[idx]
            yhat, caches = model.forward(xb)
            batch_loss = float(np.mean((yb - yhat) ** 2)) / 2.0
            if not math.isfinite(batch_loss):
                raise TrainingDivergedError(
                    f"loss became non-finite at epoch {epoch}, batch {bi}"
                )
            gy = (yhat - yb) / yb.size
            _, grads = model.backward(caches, gy)
            adam_step(params, grads, state, config.learning_rate,
                      config.beta1, config.beta2, config.epsilon)
            total += batch_loss * idx.size
        history.train_loss.append(total / n)

        if has_val:
            val_pred = model.predict(x_val)
            val_loss = half_mse(y_val, val_pred)
            if not math.isfinite(val_loss):
                raise TrainingDivergedError(
                    f"validation loss became non-finite at epoch {epoch}"
                )
            history.val_loss.append(val_loss)
            if val_loss < best_val:
                best_val = val_loss
                best_snapshot = model.snapshot()
                history.best_epoch = epoch
                bad_epochs = 0
            else:
                bad_epochs += 1
                if config.patience > 0 and bad_epochs >= config.patience:
                    history.stopped_early = True
                    break
        else:
            history.best_epoch = epoch

    if has_val and best_snapshot is not None:
        model.restore(best_snapshot)
    return model, history
