"""Command-line front end.

Subcommands: generate | wrangle | cv | featsel | hpo | depth | report.
Exit codes: 0 success, 1 usage or validation problems, 2 unwritable
output.  Every emitted CSV that depends on a seed carries a leading
"# seed=N" comment; files are written to a .partial sibling first and
renamed into place, so a crash never leaves a torn file.
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import json
import os
import sys

import numpy as np

from . import evaluation, studies
from .data import io as data_io
from .data import schema as data_schema
from .data import synthetic
# the data package re-exports the wrangle() function under the submodule's
# name, so pull what we need straight from the submodule
from .data.wrangle import encode_categories, engineer_date_features, knn_impute, wrangle
from .evaluation import kfold_split, run_model_zoo
from .nn import model_spec_from_json
from .train import TrainConfig
from .zoo import MODEL_NAMES, PROPOSED_MODEL, default_zoo, zoo_spec


class UsageError(ValueError):
    """Bad flags, bad config, or unusable input; exits with code 1."""


class OutputUnwritableError(OSError):
    """The requested output location cannot be written; exits with code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _ensure_parent_writable(path):
    parent = os.path.dirname(os.path.abspath(os.fspath(path))) or "."
    try:
        os.makedirs(parent, exist_ok=True)
    except OSError as e:
        raise OutputUnwritableError(f"cannot create directory {parent!r}: {e}") from None
    if not os.access(parent, os.W_OK):
        raise OutputUnwritableError(f"directory {parent!r} is not writable")


def _write(path, text):
    _ensure_parent_writable(path)
    try:
        data_io.atomic_write_text(path, text)
    except OSError as e:
        raise OutputUnwritableError(f"cannot write {os.fspath(path)!r}: {e}") from None


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except FileNotFoundError:
        raise UsageError(f"config file {path!r} not found") from None
    except json.JSONDecodeError as e:
        raise UsageError(f"config file {path!r} is not valid JSON: {e}") from None
    if not isinstance(doc, dict):
        raise UsageError(f"config file {path!r} must hold a JSON object")
    return doc


def _resolve(args, config, name, default):
    """Explicit flag beats config file beats built-in default."""
    value = getattr(args, name, None)
    if value is not None:
        return value
    if name in config:
        return config[name]
    return default


def _train_config(args, config):
    try:
        return TrainConfig(
            learning_rate=float(_resolve(args, config, "lr", 1e-3)),
            batch_size=int(_resolve(args, config, "batch", 512)),
            max_epochs=int(_resolve(args, config, "epochs", 50)),
            patience=int(_resolve(args, config, "patience", 5)),
            validation_fraction=float(_resolve(args, config, "val_fraction", 0.1)),
            seed=int(_resolve(args, config, "seed", 42)),
        ).validate()
    except ValueError as e:
        raise UsageError(str(e)) from None


def _int_list(text, flag):
    try:
        return tuple(int(part) for part in str(text).split(",") if part != "")
    except ValueError:
        raise UsageError(f"{flag} wants a comma-separated list of integers, got {text!r}") from None


def _float_list(text, flag):
    try:
        return tuple(float(part) for part in str(text).split(",") if part != "")
    except ValueError:
        raise UsageError(f"{flag} wants a comma-separated list of numbers, got {text!r}") from None


def _load_dataset(path):
    if not os.path.exists(path):
        raise UsageError(f"data file {path!r} not found")
    schema = data_schema.sparcs_schema()
    try:
        dataset, report = data_io.parse_csv(path, schema)
    except ValueError as e:
        raise UsageError(f"{path}: {e}") from None
    return dataset, report


def _prepare_matrix(path, impute_k=5):
    """Parse, impute, and encode a raw CSV; scaling stays per-split."""
    dataset, report = _load_dataset(path)
    if dataset.n_rows == 0:
        raise UsageError(f"{path}: no usable rows (rejected {report.n_rejected})")
    try:
        ds = knn_impute(dataset, k=impute_k)
        ds, _ = engineer_date_features(ds)
        ds, _ = encode_categories(ds)
        x, y = ds.feature_matrix()
    except ValueError as e:
        raise UsageError(f"{path}: {e}") from None
    return x, y, ds.schema.feature_names(), report


def _sizes(args, config):
    return {
        "hidden": int(_resolve(args, config, "hidden", 64)),
        "filters": tuple(_int_list(_resolve(args, config, "filters", "32,64"), "--filters")),
        "head": tuple(_int_list(_resolve(args, config, "head", "64,32"), "--head")),
        "stack": int(_resolve(args, config, "stack", 2)),
    }


def _history_csv_text(history, seed):
    buf = _io.StringIO()
    buf.write(f"# seed={seed}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "train_loss", "val_loss"])
    for epoch, train_loss in enumerate(history.train_loss):
        val = repr(history.val_loss[epoch]) if epoch < len(history.val_loss) else ""
        w.writerow([epoch, repr(train_loss), val])
    return buf.getvalue()


def _cmd_generate(args):
    config = _load_config(args.config)
    rows = int(_resolve(args, config, "rows", 5000))
    seed = int(_resolve(args, config, "seed", 42))
    out = _resolve(args, config, "out", "synthetic.csv")
    try:
        dataset = synthetic.generate(rows, seed)
    except ValueError as e:
        raise UsageError(str(e)) from None
    _write(out, data_io.dataset_to_csv_text(dataset, header_comment=f"seed={seed}"))
    los = dataset[data_schema.TARGET_COLUMN].values
    cost = dataset["Total Costs"].values
    frac = float((los > 20).mean())
    corr = float(np.corrcoef(cost, los)[0, 1])
    print(f"wrote {rows} rows to {out}")
    print(f"LoS > 20 days: {frac:.4f} of rows; cost/LoS correlation: {corr:.3f}")
    return 0


def _cmd_wrangle(args):
    config = _load_config(args.config)
    out = _resolve(args, config, "out", "wrangled.csv")
    plan_out = _resolve(args, config, "plan_out", None)
    report_out = _resolve(args, config, "report_out", None)
    impute_k = int(_resolve(args, config, "impute_k", 5))
    one_hot = bool(_resolve(args, config, "one_hot", False))
    dataset, report = _load_dataset(args.data)
    if dataset.n_rows == 0:
        raise UsageError(f"{args.data}: no usable rows (rejected {report.n_rejected})")
    try:
        ds, plan = wrangle(dataset, k=impute_k, one_hot=one_hot)
    except ValueError as e:
        raise UsageError(f"{args.data}: {e}") from None
    _write(out, data_io.dataset_to_csv_text(ds))
    if plan_out:
        _write(plan_out, plan.to_json() + "\n")
    if report_out:
        _write(report_out, report.to_csv_text())
    print(f"kept {report.n_kept} rows, rejected {report.n_rejected}; wrote {out}")
    for notice in plan.notices:
        print(f"note: {notice}")
    return 0


def _resolve_zoo(raw, input_features, sizes):
    """--model values: 'all', zoo names (comma-separated), or a spec JSON path."""
    if raw in (None, "all"):
        return default_zoo(input_features, **sizes)
    raw = str(raw)
    if raw.endswith(".json") or os.path.sep in raw:
        if not os.path.exists(raw):
            raise UsageError(f"model spec file {raw!r} not found")
        with open(raw, "r", encoding="utf-8") as f:
            text = f.read()
        try:
            spec = model_spec_from_json(text)
        except ValueError as e:
            raise UsageError(f"{raw}: {e}") from None
        if spec.input_features != input_features:
            raise UsageError(f"{raw}: spec wants {spec.input_features} "
                             f"input features, data has {input_features}")
        return [(os.path.splitext(os.path.basename(raw))[0], spec)]
    names = [part.strip() for part in raw.split(",") if part.strip()]
    unknown = [n for n in names if n not in MODEL_NAMES]
    if unknown:
        raise UsageError(f"unknown models {unknown}; choose from {list(MODEL_NAMES)}")
    return default_zoo(input_features, names=names, **sizes)


def _cmd_cv(args):
    config = _load_config(args.config)
    out_dir = _resolve(args, config, "out_dir", "out")
    folds = int(_resolve(args, config, "folds", 10))
    threads = int(_resolve(args, config, "threads", 1))
    train_config = _train_config(args, config)
    x, y, _, _ = _prepare_matrix(args.data, impute_k=int(_resolve(args, config, "impute_k", 5)))
    try:
        zoo = _resolve_zoo(_resolve(args, config, "model", "all"), x.shape[1],
                           _sizes(args, config))
    except ValueError as e:
        raise UsageError(str(e)) from None
    try:
        plan = kfold_split(x.shape[0], folds, train_config.seed)
    except ValueError as e:
        raise UsageError(str(e)) from None
    names = [name for name, _ in zoo]
    proposed = PROPOSED_MODEL if PROPOSED_MODEL in names else names[-1]
    result = run_model_zoo(x, y, zoo, train_config, plan, proposed=proposed, threads=threads)

    _write(os.path.join(out_dir, "fold_reports.csv"),
           evaluation.fold_reports_to_csv_text(result))
    _write(os.path.join(out_dir, "zoo_summary.csv"),
           evaluation.zoo_summary_to_csv_text(result))
    _write(os.path.join(out_dir, "zoo_report.json"),
           evaluation.zoo_report_to_json_text(result) + "\n")
    for (name, fold), history in result.histories.items():
        _write(os.path.join(out_dir, "history", f"{name}_{fold}.csv"),
               _history_csv_text(history, train_config.seed))

    summaries = result.summaries
    p_values = result.p_values
    for name in result.model_order:
        if name not in summaries:
            print(f"{name}: all folds failed")
            continue
        s = summaries[name]
        r = s["r"]["mean"]
        r_text = "undefined" if r is None else f"{r:.4f}"
        p = p_values.get(name)
        p_text = "" if name == proposed else (
            " p=n/a" if p is None else f" p={p:.3g}")
        print(f"{name}: R={r_text} rmse={s['rmse']['mean']:.4f}{p_text}")
    for failure in result.failures:
        print(f"failed: {failure.model} fold {failure.fold}: {failure.error}")
    print(f"reports in {out_dir}")
    return 0


def _cmd_featsel(args):
    config = _load_config(args.config)
    out_dir = _resolve(args, config, "out_dir", "out")
    folds = int(_resolve(args, config, "folds", 10))
    threads = int(_resolve(args, config, "threads", 1))
    train_config = _train_config(args, config)
    x, y, feature_names, _ = _prepare_matrix(
        args.data, impute_k=int(_resolve(args, config, "impute_k", 5)))
    try:
        spec = zoo_spec(PROPOSED_MODEL, x.shape[1], **_sizes(args, config))
    except ValueError as e:
        raise UsageError(str(e)) from None
    try:
        study = studies.feature_elimination(x, y, feature_names, spec, train_config,
                                            k=folds, threads=threads)
    except ValueError as e:
        raise UsageError(str(e)) from None
    _write(os.path.join(out_dir, "featsel.csv"), studies.feature_study_to_csv_text(study))
    print(f"baseline mean R: {study.baseline.mean_r:.4f}")
    for effect in study.effects[:3]:
        print(f"drop {effect.feature}: delta R {effect.delta_r:+.4f}")
    print(f"report in {out_dir}/featsel.csv")
    return 0


def _cmd_hpo(args):
    config = _load_config(args.config)
    out_dir = _resolve(args, config, "out_dir", "out")
    threads = int(_resolve(args, config, "threads", 1))
    lrs = _float_list(_resolve(args, config, "lrs", "0.01,0.001,0.0001,0.00001"), "--lrs")
    batches = _int_list(_resolve(args, config, "batches",
                                 "128,256,512,1024,2048,4096,8192"), "--batches")
    cv_folds = _resolve(args, config, "cv_folds", None)
    cv_folds = int(cv_folds) if cv_folds is not None else None
    train_config = _train_config(args, config)
    x, y, _, _ = _prepare_matrix(args.data, impute_k=int(_resolve(args, config, "impute_k", 5)))
    try:
        spec = zoo_spec(PROPOSED_MODEL, x.shape[1], **_sizes(args, config))
    except ValueError as e:
        raise UsageError(str(e)) from None
    try:
        result = studies.grid_search_hpo(x, y, spec, train_config,
                                         learning_rates=lrs, batch_sizes=batches,
                                         threads=threads, folds=cv_folds)
    except ValueError as e:
        raise UsageError(str(e)) from None
    _write(os.path.join(out_dir, "hpo_grid.csv"), studies.hpo_grid_to_csv_text(result))
    _write(os.path.join(out_dir, "hpo_best.json"), studies.hpo_best_to_json_text(result) + "\n")
    print(f"best: lr={result.best_learning_rate} batch={result.best_batch_size} "
          f"rmse={result.best_rmse:.4f}")
    print(f"grid in {out_dir}/hpo_grid.csv")
    return 0


def _cmd_depth(args):
    config = _load_config(args.config)
    out_dir = _resolve(args, config, "out_dir", "out")
    model = _resolve(args, config, "model", PROPOSED_MODEL)
    max_depth = int(_resolve(args, config, "max_depth", 6))
    tolerance = float(_resolve(args, config, "tolerance", 1e-3))
    train_config = _train_config(args, config)
    x, y, _, _ = _prepare_matrix(args.data, impute_k=int(_resolve(args, config, "impute_k", 5)))
    if model not in MODEL_NAMES:
        raise UsageError(f"unknown model {model!r}; choose from {list(MODEL_NAMES)}")
    try:
        spec = zoo_spec(model, x.shape[1], **_sizes(args, config))
    except ValueError as e:
        raise UsageError(str(e)) from None
    try:
        study = studies.greedy_layer_search(x, y, spec, train_config,
                                            max_depth=max_depth, tolerance=tolerance)
    except ValueError as e:
        raise UsageError(str(e)) from None
    _write(os.path.join(out_dir, "depth_trace.csv"), studies.depth_trace_to_csv_text(study))
    print(f"chosen stack depth: {study.best_depth}")
    for depth, rmse in study.trace:
        print(f"depth {depth}: val rmse {rmse:.6f}")
    return 0


def _cmd_report(args):
    config = _load_config(args.config)
    out_dir = _resolve(args, config, "out_dir", "out")
    path = os.path.join(out_dir, "fold_reports.csv")
    if not os.path.exists(path):
        raise UsageError(f"{path} not found; run cv first")
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    result = evaluation.fold_reports_from_csv_text(text, proposed=PROPOSED_MODEL)
    if not result.reports:
        raise UsageError(f"{path} holds no fold reports")
    _write(os.path.join(out_dir, "zoo_summary.csv"),
           evaluation.zoo_summary_to_csv_text(result))
    _write(os.path.join(out_dir, "zoo_report.json"),
           evaluation.zoo_report_to_json_text(result) + "\n")
    print(f"rebuilt zoo_summary.csv and zoo_report.json in {out_dir}")
    return 0


def _build_parser():
    parser = _Parser(prog="staynet",
                     description="length-of-stay models: data, training, studies")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON file with defaults for any flag (default: none)")
        p.add_argument("--seed", type=int, help="master seed (default: 42)")

    def add_train_flags(p):
        p.add_argument("--epochs", type=int, help="max training epochs (default: 50)")
        p.add_argument("--batch", type=int, help="mini-batch size (default: 512)")
        p.add_argument("--lr", type=float, help="learning rate (default: 0.001)")
        p.add_argument("--patience", type=int,
                       help="non-improving epochs before early stop, 0 disables (default: 5)")
        p.add_argument("--val-fraction", dest="val_fraction", type=float,
                       help="fraction held out for validation (default: 0.1)")
        p.add_argument("--impute-k", dest="impute_k", type=int,
                       help="neighbors for imputation (default: 5)")
        p.add_argument("--threads", type=int,
                       help="parallel cells; 1 is bit-deterministic (default: 1)")
        p.add_argument("--hidden", type=int, help="recurrent units (default: 64)")
        p.add_argument("--filters", help="conv filters per stage (default: 32,64)")
        p.add_argument("--head", help="dense head widths (default: 64,32)")
        p.add_argument("--stack", type=int, help="recurrent stack depth (default: 2)")

    p = sub.add_parser("generate", help="write a synthetic discharge CSV")
    add_common(p)
    p.add_argument("--rows", type=int, help="rows to generate (default: 5000)")
    p.add_argument("--out", help="output CSV path (default: synthetic.csv)")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("wrangle", help="impute, encode, and scale a CSV")
    add_common(p)
    p.add_argument("--data", required=True, help="input CSV path (required)")
    p.add_argument("--out", help="wrangled CSV path (default: wrangled.csv)")
    p.add_argument("--plan-out", dest="plan_out",
                   help="where to write the fitted plan JSON (default: skip)")
    p.add_argument("--report-out", dest="report_out",
                   help="where to write the rejection report CSV (default: skip)")
    p.add_argument("--impute-k", dest="impute_k", type=int,
                   help="neighbors for imputation (default: 5)")
    p.add_argument("--one-hot", dest="one_hot", action="store_const", const=True,
                   help="one-hot encode categoricals (default: label codes)")
    p.set_defaults(func=_cmd_wrangle)

    p = sub.add_parser("cv", help="cross-validate the model zoo")
    add_common(p)
    add_train_flags(p)
    p.add_argument("--data", required=True, help="input CSV path (required)")
    p.add_argument("--model",
                   help="'all', comma-separated zoo names, or a spec JSON path (default: all)")
    p.add_argument("--folds", type=int, help="cross-validation folds (default: 10)")
    p.add_argument("--out-dir", dest="out_dir", help="artifact directory (default: out)")
    p.set_defaults(func=_cmd_cv)

    p = sub.add_parser("featsel", help="leave-one-feature-out study")
    add_common(p)
    add_train_flags(p)
    p.add_argument("--data", required=True, help="input CSV path (required)")
    p.add_argument("--folds", type=int, help="cross-validation folds (default: 10)")
    p.add_argument("--out-dir", dest="out_dir", help="artifact directory (default: out)")
    p.set_defaults(func=_cmd_featsel)

    p = sub.add_parser("hpo", help="learning-rate x batch-size grid search")
    add_common(p)
    add_train_flags(p)
    p.add_argument("--data", required=True, help="input CSV path (required)")
    p.add_argument("--lrs", help="learning rates (default: 0.01,0.001,0.0001,0.00001)")
    p.add_argument("--batches",
                   help="batch sizes (default: 128,256,512,1024,2048,4096,8192)")
    p.add_argument("--cv-folds", dest="cv_folds", type=int,
                   help="score each cell by k-fold CV instead of one split "
                        "(default: single 80/10/10 split)")
    p.add_argument("--out-dir", dest="out_dir", help="artifact directory (default: out)")
    p.set_defaults(func=_cmd_hpo)

    p = sub.add_parser("depth", help="greedy recurrent-depth search")
    add_common(p)
    add_train_flags(p)
    p.add_argument("--data", required=True, help="input CSV path (required)")
    p.add_argument("--model", help="zoo model to deepen (default: cnn-gru-dnn)")
    p.add_argument("--max-depth", dest="max_depth", type=int,
                   help="deepest stack to try (default: 6)")
    p.add_argument("--tolerance", type=float,
                   help="required RMSE improvement per depth (default: 0.001)")
    p.add_argument("--out-dir", dest="out_dir", help="artifact directory (default: out)")
    p.set_defaults(func=_cmd_depth)

    p = sub.add_parser("report", help="rebuild summary files from fold_reports.csv")
    add_common(p)
    p.add_argument("--out-dir", dest="out_dir", help="artifact directory (default: out)")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OutputUnwritableError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
