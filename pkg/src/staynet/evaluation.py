"""Cross-validation, the model-zoo comparison, and significance testing.

Folds are contiguous slices of one seeded shuffle, so a (rows, k, seed)
triple always produces the same disjoint cover.  Each (model, fold) cell
derives its own seed from the master seed and the model/fold indices,
refits feature and target scaling on that fold's training rows, trains,
and reports test metrics in days (predictions are mapped back through
the target's scale bounds before scoring).

The comparison test between two models' per-fold R samples is Welch's
unequal-variance t-test with the two-sided p-value computed through the
regularized incomplete beta function.
"""

from __future__ import annotations

import csv
import dataclasses
import io as _io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .nn import build_model
from .tensor import Rng, derive_seed
from .train import MetricsReport, TrainConfig, compute_metrics, train_model

METRIC_NAMES = ("mse", "rmse", "loss", "mae", "r")
STAT_NAMES = ("mean", "max", "min", "std")


@dataclass(frozen=True)
class FoldPlan:
    """A k-fold assignment over n rows; folds are disjoint and cover 0..n-1."""

    n: int
    k: int
    seed: int
    folds: tuple

    def train_indices(self, fold):
        rest = [self.folds[j] for j in range(self.k) if j != fold]
        return np.concatenate(rest)


def kfold_split(n, k, seed):
    """Shuffle 0..n-1 with the seed and cut contiguous slices.

    The first n % k folds get one extra row, so sizes differ by at most
    one and every row lands in exactly one fold.
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if k > n:
        raise ValueError(f"k={k} folds need at least {k} rows, got {n}")
    order = Rng(seed).permutation(n)
    base, extra = divmod(n, k)
    folds = []
    start = 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        folds.append(order[start:start + size].copy())
        start += size
    return FoldPlan(n=n, k=k, seed=seed, folds=tuple(folds))


def _lbeta_tail(a, b, x):
    """Continued fraction for the incomplete beta, Lentz's method."""
    max_iter, eps, tiny = 300, 3e-16, 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        step = d * c
        h *= step
        if abs(step - 1.0) < eps:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def reg_inc_beta(a, b, x):
    """Regularized incomplete beta I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if not (a > 0 and b > 0):
        raise ValueError(f"shape parameters must be positive, got a={a}, b={b}")
    if not (0.0 <= x <= 1.0):
        raise ValueError(f"x must be in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _lbeta_tail(a, b, x) / a
    return 1.0 - front * _lbeta_tail(b, a, 1.0 - x) / b


def student_t_two_sided_p(t, df):
    """P(|T| >= |t|) for Student's t with df degrees of freedom."""
    if df <= 0:
        raise ValueError(f"df must be positive, got {df}")
    if math.isinf(t):
        return 0.0
    return reg_inc_beta(df / 2.0, 0.5, df / (df + t * t))


@dataclass(frozen=True)
class TTestResult:
    t: float
    df: float
    p: float
    degenerate: bool = False


def welch_t_test(a, b, paired=False):
    """Welch's unequal-variance t-test on two independent samples.

    Uses sample (n-1) variances and the Welch-Satterthwaite degrees of
    freedom.  Two degenerate cases are defined explicitly: both samples
    constant with equal means gives t=0, p=1; both constant with unequal
    means gives p=0 and sets the degenerate flag.  With paired=True the
    samples must have equal length and a one-sample t-test runs on the
    differences (df = n-1).
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.size < 2 or b.size < 2:
        raise ValueError(f"each sample needs at least 2 values, got {a.size} and {b.size}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("samples must be finite")
    if paired:
        if a.size != b.size:
            raise ValueError(f"paired samples must match in length, got {a.size} and {b.size}")
        d = a - b
        n = d.size
        md = float(d.mean())
        vd = float(d.var(ddof=1))
        df = float(n - 1)
        if vd == 0.0:
            if md == 0.0:
                return TTestResult(t=0.0, df=df, p=1.0, degenerate=False)
            t = math.inf if md > 0 else -math.inf
            return TTestResult(t=t, df=df, p=0.0, degenerate=True)
        t = md / math.sqrt(vd / n)
        return TTestResult(t=t, df=df, p=student_t_two_sided_p(t, df))
    m1, m2 = float(a.mean()), float(b.mean())
    v1 = float(a.var(ddof=1))
    v2 = float(b.var(ddof=1))
    n1, n2 = a.size, b.size
    if v1 == 0.0 and v2 == 0.0:
        df = float(n1 + n2 - 2)
        if m1 == m2:
            return TTestResult(t=0.0, df=df, p=1.0, degenerate=False)
        t = math.inf if m1 > m2 else -math.inf
        return TTestResult(t=t, df=df, p=0.0, degenerate=True)
    se2 = v1 / n1 + v2 / n2
    t = (m1 - m2) / math.sqrt(se2)
    df = se2 * se2 / ((v1 / n1) ** 2 / (n1 - 1) + (v2 / n2) ** 2 / (n2 - 1))
    return TTestResult(t=t, df=df, p=student_t_two_sided_p(t, df))


@dataclass(frozen=True)
class FoldReport:
    model: str
    fold: int
    metrics: MetricsReport


@dataclass(frozen=True)
class CellFailure:
    model: str
    fold: int
    error: str


def summarize_folds(reports):
    """Mean/max/min/std per metric over one model's folds.

    Std is the sample (n-1) standard deviation.  Folds where R is
    undefined are left out of the R statistics; with no defined R at all
    the R entries are None.
    """
    if not reports:
        raise ValueError("no fold reports to summarize")
    out = {}
    for metric in METRIC_NAMES:
        vals = [getattr(rep.metrics, metric) for rep in reports]
        vals = [v for v in vals if v is not None]
        if not vals:
            out[metric] = {"mean": None, "max": None, "min": None, "std": None}
            continue
        arr = np.asarray(vals, dtype=np.float64)
        std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
        out[metric] = {"mean": float(arr.mean()), "max": float(arr.max()),
                       "min": float(arr.min()), "std": std}
    return out


def _fit_fold_scaling(x_train, y_train):
    lo = x_train.min(axis=0)
    hi = x_train.max(axis=0)
    span = hi - lo
    span[span == 0.0] = 1.0
    y_lo = float(y_train.min())
    y_hi = float(y_train.max())
    return lo, span, y_lo, y_hi


def _scale_x(x, lo, span):
    return (x - lo) / span


def _scale_y(y, y_lo, y_hi):
    return (y - y_lo) / (y_hi - y_lo) if y_hi > y_lo else np.zeros_like(y)


def _unscale_y(y, y_lo, y_hi):
    return y * (y_hi - y_lo) + y_lo if y_hi > y_lo else np.full_like(y, y_lo)


def run_fold(x, y, spec, config, plan, fold, cell_seed):
    """Train one cell and score its test fold in original target units."""
    test_idx = plan.folds[fold]
    train_idx = plan.train_indices(fold)
    x_tr, y_tr = x[train_idx], y[train_idx]
    x_te, y_te = x[test_idx], y[test_idx]
    lo, span, y_lo, y_hi = _fit_fold_scaling(x_tr, y_tr)
    model = build_model(spec, Rng(cell_seed))
    cell_config = dataclasses.replace(config, seed=derive_seed(cell_seed, 1))
    model, history = train_model(model, _scale_x(x_tr, lo, span),
                                 _scale_y(y_tr, y_lo, y_hi), cell_config)
    pred = _unscale_y(model.predict(_scale_x(x_te, lo, span)), y_lo, y_hi)
    return compute_metrics(y_te, pred), history


@dataclass
class ZooResult:
    """Everything the zoo comparison produced, plus derived summaries."""

    seed: int
    proposed: str
    folds: int
    model_order: list
    reports: list
    failures: list
    histories: dict = field(default_factory=dict)

    @property
    def summaries(self):
        out = {}
        for name in self.model_order:
            model_reports = [r for r in self.reports if r.model == name]
            if model_reports:
                out[name] = summarize_folds(model_reports)
        return out

    def r_values(self, name):
        return [r.metrics.r for r in self.reports
                if r.model == name and r.metrics.r is not None]

    @property
    def p_values(self):
        """Welch p of each model's R sample against the proposed model's."""
        base = self.r_values(self.proposed)
        out = {}
        for name in self.model_order:
            if name == self.proposed:
                continue
            sample = self.r_values(name)
            if len(sample) >= 2 and len(base) >= 2:
                out[name] = welch_t_test(sample, base).p
            else:
                out[name] = None
        return out


def run_model_zoo(x, y, zoo, config, plan, proposed="cnn-gru-dnn", threads=1):
    """Cross-validate every (model, fold) cell; failures are recorded, not fatal.

    zoo is an ordered list of (name, ModelSpec).  Cell seeds come from
    derive_seed(config.seed, model_index, fold_index), so any subset of
    cells reproduces bit-identically regardless of scheduling; threads=1
    runs everything sequentially.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    names = [name for name, _ in zoo]
    if proposed not in names:
        raise ValueError(f"proposed model {proposed!r} is not in the zoo {names}")

    cells = [(mi, name, spec, fi)
             for mi, (name, spec) in enumerate(zoo)
             for fi in range(plan.k)]

    def run_cell(cell):
        mi, name, spec, fi = cell
        cell_seed = derive_seed(config.seed, mi, fi)
        try:
            metrics, history = run_fold(x, y, spec, config, plan, fi, cell_seed)
            return FoldReport(model=name, fold=fi, metrics=metrics), history, None
        except Exception as e:  # noqa: BLE001 - a bad cell must not sink the run
            return None, None, CellFailure(model=name, fold=fi, error=f"{type(e).__name__}: {e}")

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(run_cell, cells))
    else:
        outcomes = [run_cell(c) for c in cells]

    reports, failures, histories = [], [], {}
    for cell, (report, history, failure) in zip(cells, outcomes):
        _, name, _, fi = cell
        if failure is not None:
            failures.append(failure)
        else:
            reports.append(report)
            histories[(name, fi)] = history
    return ZooResult(seed=config.seed, proposed=proposed, folds=plan.k,
                     model_order=names, reports=reports, failures=failures,
                     histories=histories)


def _fmt_opt(v):
    return "" if v is None else repr(float(v))


def fold_reports_to_csv_text(result):
    """Full-precision per-cell CSV; failed cells keep their error string."""
    buf = _io.StringIO()
    buf.write(f"# seed={result.seed}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "fold", "mse", "rmse", "loss", "mae", "r", "error"])
    by_name = {name: [] for name in result.model_order}
    for rep in result.reports:
        by_name[rep.model].append(rep)
    fails = {(f.model, f.fold): f for f in result.failures}
    for name in result.model_order:
        rows = {rep.fold: rep for rep in by_name[name]}
        folds = sorted(set(rows) | {fold for (m, fold) in fails if m == name})
        for fold in folds:
            if fold in rows:
                m = rows[fold].metrics
                w.writerow([name, fold, repr(m.mse), repr(m.rmse), repr(m.loss),
                            repr(m.mae), _fmt_opt(m.r), ""])
            else:
                w.writerow([name, fold, "", "", "", "", "", fails[(name, fold)].error])
    return buf.getvalue()


def fold_reports_from_csv_text(text, proposed="cnn-gru-dnn"):
    """Rebuild a ZooResult (sans histories) from fold_reports CSV text."""
    seed = 0
    reports, failures, order = [], [], []
    reader = csv.reader(_io.StringIO(text))
    for row in reader:
        if not row:
            continue
        if row[0].startswith("#"):
            stamp = row[0].lstrip("# ").strip()
            if stamp.startswith("seed="):
                seed = int(stamp[len("seed="):])
            continue
        if row[0] == "model":
            continue
        name, fold = row[0], int(row[1])
        if name not in order:
            order.append(name)
        if row[7]:
            failures.append(CellFailure(model=name, fold=fold, error=row[7]))
            continue
        mse, rmse, loss, mae = (float(row[i]) for i in range(2, 6))
        r = float(row[6]) if row[6] else None
        reports.append(FoldReport(model=name, fold=fold, metrics=MetricsReport(
            mse=mse, rmse=rmse, loss=loss, mae=mae, r=r, n=0)))
    seen = [rep.fold for rep in reports] + [f.fold for f in failures]
    folds = max(seen, default=-1) + 1
    if proposed not in order and order:
        proposed = order[-1]
    return ZooResult(seed=seed, proposed=proposed, folds=folds, model_order=order,
                     reports=reports, failures=failures)


def _fmt6(v):
    return "" if v is None else f"{v:.6f}"


def zoo_summary_to_csv_text(result):
    """One panel per model: mean/max/min/std rows for each metric, 6 decimals."""
    buf = _io.StringIO()
    buf.write(f"# seed={result.seed}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "stat"] + list(METRIC_NAMES))
    summaries = result.summaries
    for name in result.model_order:
        if name not in summaries:
            continue
        summary = summaries[name]
        for stat in STAT_NAMES:
            w.writerow([name, stat] + [_fmt6(summary[m][stat]) for m in METRIC_NAMES])
    return buf.getvalue()


def zoo_report_to_json_text(result):
    """Machine-readable comparison report with p-values against the proposed model."""
    summaries = result.summaries
    p_values = result.p_values
    models = []
    for name in result.model_order:
        if name not in summaries:
            continue
        models.append({
            "name": name,
            "summary": summaries[name],
            "p_value": p_values.get(name),
            "n_folds": len([r for r in result.reports if r.model == name]),
        })
    doc = {
        "seed": result.seed,
        "proposed": result.proposed,
        "folds": result.folds,
        "models": models,
        "failures": [{"model": f.model, "fold": f.fold, "error": f.error}
                     for f in result.failures],
    }
    return json.dumps(doc, indent=2)
