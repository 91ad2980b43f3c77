"""CSV reading and writing for schema'd tables.

Parsing is tolerant of messy cells but strict about bad rows: a cell that
fails to parse as a number (or date) becomes a missing value, while a row
whose parsed value lands outside the schema bounds, names an unknown
category, or has the wrong column count is rejected into a report that
records the row number and reason.  Row numbers are 1-based over data
rows (the header is row 0).
"""

from __future__ import annotations

import csv
import datetime
import io as _io
import os
from dataclasses import dataclass, field

import numpy as np

from .dataset import Column, Dataset

MISSING_TOKENS = ("", "NA", "N/A", "NULL")


@dataclass
class RejectionReport:
    """Rows dropped during parsing, with the first reason that applied.

    Each entry is (row_number, column, reason); column is "" when the
    problem is not tied to one column (e.g. wrong cell count).
    """

    rows: list = field(default_factory=list)
    n_seen: int = 0

    def add(self, row_number, column, reason):
        self.rows.append((row_number, column, reason))

    @property
    def n_rejected(self):
        return len(self.rows)

    @property
    def n_kept(self):
        return self.n_seen - self.n_rejected

    def to_csv_text(self):
        buf = _io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["row", "column", "reason"])
        for row_number, column, reason in self.rows:
            w.writerow([row_number, column, reason])
        return buf.getvalue()


def atomic_write_text(path, text):
    """Write text to path via a .partial sibling and an atomic rename."""
    path = os.fspath(path)
    tmp = path + ".partial"
    with open(tmp, "w", encoding="utf-8", newline="") as f:
        f.write(text)
    os.replace(tmp, path)


def _parse_cell(cell, col):
    """Returns (value, missing, error_reason)."""
    text = cell.strip()
    if text in MISSING_TOKENS:
        return None, True, None
    if col.kind == "numerical":
        try:
            v = float(text)
        except ValueError:
            return None, True, None
        if not np.isfinite(v):
            return None, True, None
        if col.bounds is not None and not (col.bounds[0] <= v <= col.bounds[1]):
            return None, False, (
                f"value {text} outside [{col.bounds[0]:g}, {col.bounds[1]:g}]"
            )
        return v, False, None
    if col.kind == "date":
        try:
            datetime.date.fromisoformat(text)
        except ValueError:
            return None, True, None
        return text, False, None
    # categorical and logical
    if text not in col.categories:
        return None, False, f"unknown category {text!r}"
    return text, False, None


def parse_csv(source, schema):
    """Read a CSV into (Dataset, RejectionReport).

    source is a path or an open text stream.  The header must contain
    exactly the schema's column names, in any order.
    """
    if hasattr(source, "read"):
        return _parse_stream(source, schema)
    with open(os.fspath(source), "r", encoding="utf-8", newline="") as f:
        return _parse_stream(f, schema)


def _parse_stream(stream, schema):
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise ValueError("empty CSV: no header row") from None
    header = [h.strip() for h in header]
    # comment lines (e.g. a leading "# seed=..." stamp) precede the header
    while header and header[0].startswith("#"):
        header = [h.strip() for h in next(reader)]
    want = set(schema.names())
    got = set(header)
    if want - got:
        raise ValueError(f"CSV is missing columns {sorted(want - got)}")
    if got - want:
        raise ValueError(f"CSV has unknown columns {sorted(got - want)}")
    if len(header) != len(got):
        raise ValueError("CSV header repeats a column name")
    positions = [header.index(c.name) for c in schema.columns]

    cells = {c.name: [] for c in schema.columns}
    masks = {c.name: [] for c in schema.columns}
    report = RejectionReport()
    for row_number, row in enumerate(reader, start=1):
        if len(row) == 1 and row[0].startswith("#"):
            continue
        report.n_seen += 1
        if len(row) != len(header):
            report.add(row_number, "",
                       f"expected {len(header)} columns, got {len(row)}")
            continue
        parsed = []
        bad = None
        for col, pos in zip(schema.columns, positions):
            value, is_missing, err = _parse_cell(row[pos], col)
            if err is not None:
                bad = (col.name, err)
                break
            parsed.append((col.name, value, is_missing))
        if bad is not None:
            report.add(row_number, bad[0], bad[1])
            continue
        for name, value, is_missing in parsed:
            col = schema[name]
            if col.kind == "numerical":
                cells[name].append(np.nan if is_missing else value)
            else:
                cells[name].append("" if is_missing else value)
            masks[name].append(is_missing)

    columns = {}
    for col in schema.columns:
        if col.kind == "numerical":
            values = np.asarray(cells[col.name], dtype=np.float64)
        else:
            values = np.asarray(cells[col.name], dtype=object)
        columns[col.name] = Column(values, np.asarray(masks[col.name], dtype=bool))
    return Dataset(schema, columns), report


def _format_cell(col, values, mask, i):
    if mask[i]:
        return ""
    if col.kind == "numerical":
        return repr(float(values[i]))
    return str(values[i])


def dataset_to_csv_text(dataset, header_comment=None):
    """Render a dataset as CSV text; floats use shortest round-trip form."""
    buf = _io.StringIO()
    if header_comment:
        buf.write(f"# {header_comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    names = dataset.schema.names()
    w.writerow(names)
    cols = [(dataset.schema[n], dataset[n].values, dataset[n].mask) for n in names]
    for i in range(dataset.n_rows):
        w.writerow([_format_cell(c, v, m, i) for c, v, m in cols])
    return buf.getvalue()


def write_csv(dataset, path, header_comment=None):
    atomic_write_text(path, dataset_to_csv_text(dataset, header_comment))
