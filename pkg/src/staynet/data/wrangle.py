"""Missing-value imputation, encoding, scaling, and date features.

The full pipeline runs impute -> date features -> encode -> scale and
records everything needed to redo the deterministic parts in a
WranglePlan (encoder tables, scale bounds, key columns, notices).
"""

from __future__ import annotations

import datetime
import json
from dataclasses import dataclass, field

import numpy as np

from ..tensor import ShapeError
from .dataset import Column, Dataset
from .schema import KEY_COLUMNS, ColumnSchema

DATE_COLUMN = "Admission Date"


class UnseenCategoryError(ValueError):
    """An encoding plan met a category it was never fitted on."""


def _key_matrix(dataset, key_columns):
    """Encoded, min-max scaled key columns for neighbour distances.

    Returns (K[n, nk], observed[n, nk]); categorical keys are coded by
    lexicographic rank before scaling so every key spans [0, 1].
    """
    n = dataset.n_rows
    k_cols = []
    obs_cols = []
    for name in key_columns:
        col = dataset[name]
        spec = dataset.schema[name]
        if col.is_numeric:
            vals = col.values.astype(np.float64).copy()
        else:
            cats = sorted(spec.categories)
            codes = {c: i for i, c in enumerate(cats)}
            vals = np.zeros(n)
            for i in range(n):
                if not col.mask[i]:
                    vals[i] = codes[col.values[i]]
        observed = ~col.mask
        if observed.any():
            lo = vals[observed].min()
            hi = vals[observed].max()
            if hi > lo:
                vals = (vals - lo) / (hi - lo)
            else:
                vals = np.zeros(n)
        k_cols.append(vals)
        obs_cols.append(observed)
    return np.column_stack(k_cols), np.column_stack(obs_cols)


def knn_impute(dataset, k=5, key_columns=KEY_COLUMNS):
    """Fill missing cells from the k nearest rows in key-column space.

    Neighbours are complete candidate rows: the imputed column observed
    and every key column observed.  Distance is Euclidean over the query
    row's observed keys; ties break on the lower row index.  Numeric gaps
    take the neighbour mean, categorical gaps the lexicographically
    smallest mode.  A dataset with no gaps is returned as-is.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    for name in key_columns:
        if name not in dataset:
            raise ValueError(f"key column {name!r} not in dataset")
    if dataset.n_missing() == 0:
        return dataset

    keys, key_obs = _key_matrix(dataset, key_columns)
    all_keys_obs = key_obs.all(axis=1)
    out = dataset.copy()

    for name in dataset.schema.names():
        col = out[name]
        if not col.mask.any():
            continue
        candidates = np.flatnonzero(~col.mask & all_keys_obs)
        if candidates.size == 0:
            raise ValueError(f"column {name!r}: no complete candidate rows to impute from")
        if candidates.size < k:
            raise ValueError(
                f"column {name!r}: only {candidates.size} candidate rows for k={k}"
            )
        cand_keys = keys[candidates]
        for i in np.flatnonzero(col.mask):
            used = key_obs[i]
            if used.any():
                diff = cand_keys[:, used] - keys[i, used]
                d2 = np.einsum("ij,ij->i", diff, diff)
            else:
                d2 = np.zeros(candidates.size)
            nearest = candidates[np.argsort(d2, kind="stable")[:k]]
            if col.is_numeric:
                col.values[i] = float(col.values[nearest].mean())
            else:
                votes, counts = np.unique(col.values[nearest].astype(str), return_counts=True)
                col.values[i] = str(votes[np.argmax(counts)])
            col.mask[i] = False
    return out


def fit_encoders(schema):
    """Category -> code tables, lexicographic order, one per non-numeric column."""
    encoders = {}
    for col in schema.columns:
        if col.kind in ("categorical", "logical"):
            encoders[col.name] = tuple(sorted(col.categories))
    return encoders


def encode_categories(dataset, encoders=None, one_hot=False):
    """Replace categorical/logical columns with numeric codes.

    Codes follow lexicographic category order, 0..G-1 (logical N=0, Y=1).
    With one_hot=True each category becomes its own 0/1 column named
    "column=category".  Values outside the encoder table raise
    UnseenCategoryError naming the column and value.
    """
    if encoders is None:
        encoders = fit_encoders(dataset.schema)

    new_schema_cols = []
    new_columns = {}
    for spec in dataset.schema.columns:
        col = dataset[spec.name]
        if spec.kind in ("numerical", "date") or spec.name not in encoders:
            new_schema_cols.append(spec)
            new_columns[spec.name] = col.copy()
            continue
        cats = np.asarray(encoders[spec.name], dtype=object)
        order = np.argsort(cats.astype(str))
        cats = cats[order]
        observed = ~col.mask
        vals = col.values[observed].astype(str)
        idx = np.searchsorted(cats.astype(str), vals)
        idx_clipped = np.clip(idx, 0, len(cats) - 1)
        bad = cats.astype(str)[idx_clipped] != vals
        if bad.any():
            where = np.flatnonzero(observed)[np.flatnonzero(bad)[0]]
            raise UnseenCategoryError(
                f"column {spec.name!r}: category {col.values[where]!r} not in encoding plan"
            )
        if one_hot:
            for j, cat in enumerate(cats):
                name = f"{spec.name}={cat}"
                values = np.zeros(dataset.n_rows)
                values[observed] = (idx_clipped == j).astype(np.float64)
                values[col.mask] = np.nan
                new_schema_cols.append(ColumnSchema(name, "numerical", bounds=(0.0, 1.0)))
                new_columns[name] = Column(values, col.mask.copy())
        else:
            values = np.full(dataset.n_rows, np.nan)
            values[observed] = idx_clipped.astype(np.float64)
            new_schema_cols.append(ColumnSchema(
                spec.name, "numerical", bounds=(0.0, float(len(cats) - 1)),
                is_target=spec.is_target))
            new_columns[spec.name] = Column(values, col.mask.copy())

    schema = type(dataset.schema)(tuple(new_schema_cols))
    return Dataset(schema, new_columns), encoders


def fit_scale(dataset, columns=None):
    """Observed min/max per numeric column; constant columns noted."""
    table = {}
    notices = []
    names = columns if columns is not None else dataset.schema.names()
    for name in names:
        col = dataset[name]
        if not col.is_numeric:
            continue
        observed = ~col.mask
        if not observed.any():
            raise ValueError(f"column {name!r}: nothing observed to fit scaling on")
        lo = float(col.values[observed].min())
        hi = float(col.values[observed].max())
        if hi == lo:
            notices.append(f"column {name!r} is constant ({lo!r}); scaled to 0")
        table[name] = (lo, hi)
    return table, notices


def apply_scale(dataset, table):
    """Map each numeric column through (v - lo) / (hi - lo); constants to 0."""
    out = dataset.copy()
    for name in out.schema.names():
        col = out[name]
        if not col.is_numeric:
            continue
        if name not in table:
            raise ValueError(f"column {name!r} has no fitted scale bounds")
        lo, hi = table[name]
        observed = ~col.mask
        if hi > lo:
            col.values[observed] = (col.values[observed] - lo) / (hi - lo)
        else:
            col.values[observed] = 0.0
    return out


def scale_minmax(dataset, table=None):
    """Fit (unless given) and apply min-max scaling; returns (ds, table, notices)."""
    notices = []
    if table is None:
        table, notices = fit_scale(dataset)
    return apply_scale(dataset, table), table, notices


def inverse_scale(values, bounds):
    """Undo min-max scaling: v * (hi - lo) + lo."""
    lo, hi = bounds
    values = np.asarray(values, dtype=np.float64)
    return values * (hi - lo) + lo if hi > lo else np.full_like(values, lo)


def engineer_date_features(dataset, column=DATE_COLUMN):
    """Split an ISO date column into weekday (Monday 0), month, and year.

    Returns (dataset, notice).  When the column is absent the dataset
    comes back untouched with a notice saying the step was skipped.
    """
    if column not in dataset:
        return dataset, f"no {column!r} column; date features skipped"
    col = dataset[column]
    spec = dataset.schema[column]
    if spec.kind != "date":
        raise ValueError(f"column {column!r} has kind {spec.kind!r}, not date")
    n = dataset.n_rows
    weekday = np.full(n, np.nan)
    month = np.full(n, np.nan)
    year = np.full(n, np.nan)
    for i in range(n):
        if col.mask[i]:
            continue
        d = datetime.date.fromisoformat(str(col.values[i]))
        weekday[i] = d.weekday()
        month[i] = d.month
        year[i] = d.year
    out = dataset.drop_column(column)
    mask = col.mask
    schema = out.schema.extend((
        ColumnSchema(f"{column} Weekday", "numerical", bounds=(0, 6)),
        ColumnSchema(f"{column} Month", "numerical", bounds=(1, 12)),
        ColumnSchema(f"{column} Year", "numerical"),
    ))
    columns = {k: v for k, v in out.columns.items()}
    columns[f"{column} Weekday"] = Column(weekday, mask.copy())
    columns[f"{column} Month"] = Column(month, mask.copy())
    columns[f"{column} Year"] = Column(year, mask.copy())
    return Dataset(schema, columns), None


@dataclass
class WranglePlan:
    """Everything needed to repeat the deterministic wrangling steps."""

    knn_k: int = 5
    key_columns: tuple = KEY_COLUMNS
    one_hot: bool = False
    date_column: str = DATE_COLUMN
    encoders: dict = field(default_factory=dict)
    scale: dict = field(default_factory=dict)
    notices: tuple = ()

    def to_json(self):
        doc = {
            "knn_k": self.knn_k,
            "key_columns": list(self.key_columns),
            "one_hot": self.one_hot,
            "date_column": self.date_column,
            "encoders": {k: list(v) for k, v in sorted(self.encoders.items())},
            "scale": {k: list(v) for k, v in sorted(self.scale.items())},
            "notices": list(self.notices),
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        return cls(knn_k=int(doc["knn_k"]),
                   key_columns=tuple(doc["key_columns"]),
                   one_hot=bool(doc["one_hot"]),
                   date_column=doc["date_column"],
                   encoders={k: tuple(v) for k, v in doc["encoders"].items()},
                   scale={k: tuple(v) for k, v in doc["scale"].items()},
                   notices=tuple(doc["notices"]))


def wrangle(dataset, k=5, key_columns=KEY_COLUMNS, one_hot=False, date_column=DATE_COLUMN):
    """Full pipeline: impute, date features, encode, scale to [0, 1].

    Returns (dataset, WranglePlan).  The result has every column numeric,
    nothing missing, and all values in [0, 1].
    """
    notices = []
    ds = knn_impute(dataset, k=k, key_columns=key_columns)
    ds, notice = engineer_date_features(ds, date_column)
    if notice:
        notices.append(notice)
    ds, encoders = encode_categories(ds, one_hot=one_hot)
    ds, table, scale_notices = scale_minmax(ds)
    notices.extend(scale_notices)
    plan = WranglePlan(knn_k=k, key_columns=tuple(key_columns), one_hot=one_hot,
                       date_column=date_column, encoders=encoders, scale=table,
                       notices=tuple(notices))
    return ds, plan


def apply_plan(dataset, plan):
    """Re-run a fitted plan on new data; unseen categories raise."""
    ds = knn_impute(dataset, k=plan.knn_k, key_columns=plan.key_columns)
    ds, _ = engineer_date_features(ds, plan.date_column)
    ds, _ = encode_categories(ds, encoders=plan.encoders, one_hot=plan.one_hot)
    if not plan.scale:
        raise ValueError("plan has no fitted scale bounds")
    return apply_scale(ds, plan.scale)
