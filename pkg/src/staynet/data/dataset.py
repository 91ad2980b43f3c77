"""In-memory column store for one table.

Numeric and date-free categorical columns live side by side: numeric
columns are float64 arrays, categorical/logical/date columns are arrays
of strings.  Missingness is tracked in an explicit boolean mask per
column (True = missing), so a NaN that sneaks into values without a mask
bit is a bug, not a missing cell.
"""

from __future__ import annotations

import numpy as np

from ..tensor import ShapeError


class Column:
    """One column's values and missing-mask; rows align with the table."""

    __slots__ = ("values", "mask")

    def __init__(self, values, mask=None):
        values = np.asarray(values)
        if values.dtype.kind in "fiu":
            values = values.astype(np.float64)
        else:
            values = values.astype(object)
        if mask is None:
            mask = np.zeros(values.shape[0], dtype=bool)
        else:
            mask = np.asarray(mask, dtype=bool)
        if mask.shape != (values.shape[0],):
            raise ShapeError(f"mask shape {mask.shape} vs values {values.shape}")
        self.values = values
        self.mask = mask

    @property
    def is_numeric(self):
        return self.values.dtype.kind == "f"

    def copy(self):
        return Column(self.values.copy(), self.mask.copy())

    def take(self, idx):
        return Column(self.values[idx], self.mask[idx])

    def n_missing(self):
        return int(self.mask.sum())


class Dataset:
    """Columns keyed by name, ordered by the schema."""

    def __init__(self, schema, columns):
        missing = [c.name for c in schema.columns if c.name not in columns]
        if missing:
            raise ValueError(f"dataset is missing columns {missing}")
        extra = [name for name in columns if name not in schema]
        if extra:
            raise ValueError(f"dataset has columns not in schema: {extra}")
        lengths = {col.values.shape[0] for col in columns.values()}
        if len(lengths) > 1:
            raise ShapeError(f"ragged columns: lengths {sorted(lengths)}")
        self.schema = schema
        self.columns = {c.name: columns[c.name] for c in schema.columns}

    @property
    def n_rows(self):
        first = next(iter(self.columns.values()), None)
        return 0 if first is None else first.values.shape[0]

    def __getitem__(self, name):
        return self.columns[name]

    def __contains__(self, name):
        return name in self.columns

    def copy(self):
        return Dataset(self.schema, {k: v.copy() for k, v in self.columns.items()})

    def take(self, idx):
        idx = np.asarray(idx)
        return Dataset(self.schema, {k: v.take(idx) for k, v in self.columns.items()})

    def drop_column(self, name):
        schema = self.schema.drop(name)
        cols = {k: v for k, v in self.columns.items() if k != name}
        return Dataset(schema, cols)

    def n_missing(self):
        return sum(col.n_missing() for col in self.columns.values())

    def feature_matrix(self):
        """(X[n, features], y[n]) in schema feature order; all-numeric only."""
        bad = [name for name, col in self.columns.items()
               if not col.is_numeric or col.mask.any()]
        if bad:
            raise ValueError(f"columns not ready for modelling: {bad}")
        feats = self.schema.feature_names()
        x = np.column_stack([self.columns[f].values for f in feats]) if feats else \
            np.empty((self.n_rows, 0))
        y = self.columns[self.schema.target.name].values.copy()
        return x, y
