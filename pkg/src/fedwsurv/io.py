"""CSV ingestion and export of datasets.

Schema: a header row with ``id,site,time,event,a`` followed by covariate
columns by name; ``event`` is 1 when the event time was observed.
"""
from __future__ import annotations

import csv

import numpy as np

from .core import Dataset, SchemaError

REQUIRED = ("id", "site", "time", "event", "a")


def read_dataset(path) -> Dataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        for col in REQUIRED:
            if col not in header:
                raise SchemaError(f"{path}: missing required column {col!r}")
        covs = [h for h in header if h not in REQUIRED]
        if not covs:
            raise SchemaError(f"{path}: no covariate columns")
        idx = {h: k for k, h in enumerate(header)}
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise SchemaError(f"{path}:{lineno}: {len(row)} fields, expected {len(header)}")
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    data = np.array(rows)

    def ints(col):
        v = data[:, idx[col]]
        if not np.all(v == np.round(v)):
            bad = int(np.flatnonzero(v != np.round(v))[0]) + 2
            raise SchemaError(f"{path}:{bad}: column {col!r} must be an integer")
        return v.astype(np.int64)

    try:
        return Dataset(tuple(covs), ints("id"), ints("site"),
                       data[:, [idx[c] for c in covs]], ints("a"), data[:, idx["time"]],
                       ints("event"))
    except SchemaError as exc:
        raise SchemaError(f"{path}: {exc}") from None


def write_dataset(ds: Dataset, path):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(list(REQUIRED) + list(ds.covariate_names))
        for k in range(ds.n):
            out.writerow([int(ds.id[k]), int(ds.site[k]), repr(float(ds.time[k])),
                          int(ds.delta[k]), int(ds.a[k])]
                         + [repr(float(v)) for v in ds.x[k]])


def read_nuisances(path, ds: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Supplied ``pi`` and ``phi`` per record id (columns ``id,pi,phi``)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for col in ("id", "pi", "phi"):
            if col not in (reader.fieldnames or ()):
                raise SchemaError(f"{path}: missing required column {col!r}")
        table = {int(r["id"]): (float(r["pi"]), float(r["phi"])) for r in reader}
    try:
        vals = np.array([table[int(i)] for i in ds.id])
    except KeyError as exc:
        raise SchemaError(f"{path}: no nuisance values for record id {exc.args[0]}") from None
    return vals[:, 0], vals[:, 1]
