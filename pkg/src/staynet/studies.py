"""Experiment studies: feature elimination, grid HPO, greedy depth search.

All three are deterministic functions of (data, spec, config): every
trained model's seed is derived from the config seed and the cell's
coordinates, and the HPO grid deliberately reuses one identical seed for
every cell so that cells differ only in the hyper-parameters under test.
"""

from __future__ import annotations

import csv
import dataclasses
import io as _io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .evaluation import (
    _fit_fold_scaling,
    _scale_x,
    _scale_y,
    _unscale_y,
    kfold_split,
    run_fold,
)
from .nn import build_model, with_stack_depth
from .tensor import Rng, derive_seed
from .train import TrainingDivergedError, train_model


@dataclass(frozen=True)
class FeatureEffect:
    """CV metrics with one feature removed; deltas are gains over baseline."""

    feature: str
    mean_r: float
    mean_mae: float
    mean_rmse: float
    delta_r: float


@dataclass(frozen=True)
class FeatureStudy:
    seed: int
    baseline: FeatureEffect
    effects: tuple  # sorted by delta_r, largest gain first


def _cv_means(x, y, spec, config, plan, removal_index):
    rs, maes, rmses = [], [], []
    for fold in range(plan.k):
        cell_seed = derive_seed(config.seed, removal_index, fold)
        metrics, _ = run_fold(x, y, spec, config, plan, fold, cell_seed)
        if metrics.r is not None:
            rs.append(metrics.r)
        maes.append(metrics.mae)
        rmses.append(metrics.rmse)
    mean_r = float(np.mean(rs)) if rs else math.nan
    return mean_r, float(np.mean(maes)), float(np.mean(rmses))


def feature_elimination(x, y, feature_names, spec, config, k=10, threads=1):
    """Leave-one-feature-out study against the full-feature baseline.

    Runs k-fold CV once on all features, then once per feature with that
    column dropped (the spec shrinks by one input).  Fold assignments are
    shared across runs.  delta_r > 0 means removing the feature helped.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.shape[1] != len(feature_names):
        raise ValueError(f"{x.shape[1]} columns vs {len(feature_names)} names")
    if x.shape[1] != spec.input_features:
        raise ValueError(f"spec wants {spec.input_features} features, data has {x.shape[1]}")
    plan = kfold_split(x.shape[0], k, config.seed)
    small_spec = dataclasses.replace(spec, input_features=spec.input_features - 1)

    def run(removal_index):
        if removal_index == 0:
            return _cv_means(x, y, spec, config, plan, 0)
        drop = removal_index - 1
        x_v = np.delete(x, drop, axis=1)
        return _cv_means(x_v, y, small_spec, config, plan, removal_index)

    jobs = range(len(feature_names) + 1)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(run, jobs))
    else:
        outcomes = [run(j) for j in jobs]

    base_r, base_mae, base_rmse = outcomes[0]
    baseline = FeatureEffect("(baseline)", base_r, base_mae, base_rmse, 0.0)
    effects = []
    for name, (mean_r, mean_mae, mean_rmse) in zip(feature_names, outcomes[1:]):
        effects.append(FeatureEffect(name, mean_r, mean_mae, mean_rmse,
                                     mean_r - base_r))
    effects.sort(key=lambda e: (-e.delta_r, e.feature))
    return FeatureStudy(seed=config.seed, baseline=baseline, effects=tuple(effects))


def feature_study_to_csv_text(study):
    buf = _io.StringIO()
    buf.write(f"# seed={study.seed}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["feature", "mean_r", "mean_mae", "mean_rmse", "delta_r_vs_baseline"])
    for e in (study.baseline,) + study.effects:
        w.writerow([e.feature, f"{e.mean_r:.6f}", f"{e.mean_mae:.6f}",
                    f"{e.mean_rmse:.6f}", f"{e.delta_r:.6f}"])
    return buf.getvalue()


DEFAULT_LEARNING_RATES = (1e-2, 1e-3, 1e-4, 1e-5)
DEFAULT_BATCH_SIZES = (128, 256, 512, 1024, 2048, 4096, 8192)


@dataclass(frozen=True)
class HpoResult:
    seed: int
    learning_rates: tuple
    batch_sizes: tuple
    rmse: tuple          # rows follow learning_rates, columns batch_sizes
    best_learning_rate: float
    best_batch_size: int
    best_rmse: float


def _holdout_split(n, seed):
    """Seeded 80/10/10 split: train, then validation, then test slice."""
    m = n // 10
    if m < 1:
        raise ValueError(f"need at least 10 rows for an 80/10/10 split, got {n}")
    order = Rng(seed).permutation(n)
    return order[:n - 2 * m], order[n - 2 * m:n - m], order[n - m:]


def pick_best(grid, learning_rates, batch_sizes):
    """Smallest RMSE cell; ties prefer the smaller lr, then the smaller batch."""
    ranked = sorted(
        ((grid[i][j], learning_rates[i], batch_sizes[j])
         for i in range(len(learning_rates)) for j in range(len(batch_sizes))),
        key=lambda c: (c[0], c[1], c[2]))
    best_rmse, best_lr, best_bs = ranked[0]
    if not math.isfinite(best_rmse):
        raise TrainingDivergedError("every grid cell diverged")
    return best_lr, best_bs, best_rmse


def grid_search_hpo(x, y, spec, config,
                    learning_rates=DEFAULT_LEARNING_RATES,
                    batch_sizes=DEFAULT_BATCH_SIZES, threads=1, folds=None):
    """Exhaustive (learning rate x batch size) sweep on one 80/10/10 split.

    Every cell trains from the same initial weights and the same shuffle
    seed, so the grid isolates the two hyper-parameters.  A diverging
    cell scores +inf.  Ties prefer the smaller learning rate, then the
    smaller batch.  folds=k replaces the single split with full k-fold
    CV per cell (mean test RMSE), still sharing the one seed pair.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if not learning_rates or not batch_sizes:
        raise ValueError("grid needs at least one learning rate and one batch size")
    if folds is None:
        groups = [_holdout_split(x.shape[0], config.seed)]
    else:
        plan = kfold_split(x.shape[0], folds, config.seed)
        groups = [(plan.train_indices(f), None, plan.folds[f]) for f in range(plan.k)]
    splits = []
    for train_idx, val_idx, test_idx in groups:
        lo, span, y_lo, y_hi = _fit_fold_scaling(x[train_idx], y[train_idx])
        x_tr, y_tr = _scale_x(x[train_idx], lo, span), _scale_y(y[train_idx], y_lo, y_hi)
        if val_idx is None:
            x_va = y_va = None
        else:
            x_va, y_va = _scale_x(x[val_idx], lo, span), _scale_y(y[val_idx], y_lo, y_hi)
        splits.append((x_tr, y_tr, x_va, y_va,
                       _scale_x(x[test_idx], lo, span), y[test_idx], y_lo, y_hi))

    build_seed = derive_seed(config.seed, 1)
    shuffle_seed = derive_seed(config.seed, 2)

    def run_cell(cell):
        lr, bs = cell
        cell_config = dataclasses.replace(config, learning_rate=lr, batch_size=bs,
                                          seed=shuffle_seed)
        total = 0.0
        for x_tr, y_tr, x_va, y_va, x_te, y_te, y_lo, y_hi in splits:
            model = build_model(spec, Rng(build_seed))
            try:
                model, _ = train_model(model, x_tr, y_tr, cell_config,
                                       x_val=x_va, y_val=y_va)
                pred = _unscale_y(model.predict(x_te), y_lo, y_hi)
                rmse = float(np.sqrt(np.mean((y_te - pred) ** 2)))
            except TrainingDivergedError:
                return math.inf
            if not math.isfinite(rmse):
                return math.inf
            total += rmse
        return total / len(splits)

    cells = [(lr, bs) for lr in learning_rates for bs in batch_sizes]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            flat = list(pool.map(run_cell, cells))
    else:
        flat = [run_cell(c) for c in cells]

    grid = tuple(tuple(flat[i * len(batch_sizes):(i + 1) * len(batch_sizes)])
                 for i in range(len(learning_rates)))
    best_lr, best_bs, best_rmse = pick_best(grid, learning_rates, batch_sizes)
    return HpoResult(seed=config.seed, learning_rates=tuple(learning_rates),
                     batch_sizes=tuple(batch_sizes), rmse=grid,
                     best_learning_rate=best_lr, best_batch_size=best_bs,
                     best_rmse=best_rmse)


def hpo_grid_to_csv_text(result):
    """Matrix CSV: one row per learning rate, one column per batch size."""
    buf = _io.StringIO()
    buf.write(f"# seed={result.seed}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["learning_rate"] + [str(b) for b in result.batch_sizes])
    for lr, row in zip(result.learning_rates, result.rmse):
        w.writerow([repr(float(lr))] + ["inf" if math.isinf(v) else f"{v:.6f}" for v in row])
    return buf.getvalue()


def hpo_best_to_json_text(result):
    return json.dumps({"learning_rate": result.best_learning_rate,
                       "batch_size": result.best_batch_size,
                       "rmse": result.best_rmse}, indent=2)


@dataclass(frozen=True)
class DepthStudy:
    seed: int
    best_depth: int
    trace: tuple  # (depth, validation rmse in scaled units)


def greedy_layer_search(x, y, spec, config, max_depth=6, tolerance=1e-3):
    """Deepen the first recurrent layer until validation RMSE stalls.

    Evaluates depth 1, 2, ... on a seeded 80/20 split; stops at the first
    depth whose RMSE fails to improve on the previous one by more than
    the tolerance and returns the previous depth.  RMSE is measured in
    scaled target units.
    """
    if max_depth < 1:
        raise ValueError(f"max_depth must be >= 1, got {max_depth}")
    if tolerance < 0:
        raise ValueError(f"tolerance must be >= 0, got {tolerance}")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    n = x.shape[0]
    n_val = n // 5
    if n_val < 1:
        raise ValueError(f"need at least 5 rows for an 80/20 split, got {n}")
    order = Rng(config.seed).permutation(n)
    train_idx, val_idx = order[:n - n_val], order[n - n_val:]
    lo, span, y_lo, y_hi = _fit_fold_scaling(x[train_idx], y[train_idx])
    x_tr, y_tr = _scale_x(x[train_idx], lo, span), _scale_y(y[train_idx], y_lo, y_hi)
    x_va, y_va = _scale_x(x[val_idx], lo, span), _scale_y(y[val_idx], y_lo, y_hi)

    build_seed = derive_seed(config.seed, 3)
    shuffle_seed = derive_seed(config.seed, 4)
    trace = []
    best_depth = 1
    prev = math.inf
    for depth in range(1, max_depth + 1):
        deep_spec = with_stack_depth(spec, depth)
        model = build_model(deep_spec, Rng(build_seed))
        cell_config = dataclasses.replace(config, seed=shuffle_seed)
        model, _ = train_model(model, x_tr, y_tr, cell_config, x_val=x_va, y_val=y_va)
        rmse = float(np.sqrt(np.mean((y_va - model.predict(x_va)) ** 2)))
        trace.append((depth, rmse))
        if depth > 1 and rmse > prev - tolerance:
            break
        best_depth = depth
        prev = rmse
    return DepthStudy(seed=config.seed, best_depth=best_depth, trace=tuple(trace))


def depth_trace_to_csv_text(study):
    buf = _io.StringIO()
    buf.write(f"# seed={study.seed}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["depth", "val_rmse"])
    for depth, rmse in study.trace:
        w.writerow([depth, f"{rmse:.6f}"])
    return buf.getvalue()
