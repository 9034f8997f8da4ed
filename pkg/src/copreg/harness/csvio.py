"""Long-format CSV for clustered responses.

Header ``id,y,<covariates...>[,time]``.  Rows of one cluster must be
contiguous; an intercept column is added in front of the covariates.
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from ..errors import DataError
from ..likelihood import Cluster, Dataset


def read_longitudinal_csv(path) -> Dataset:
    p = Path(path)
    try:
        fh = p.open(newline="")
    except OSError as exc:
        raise DataError(f"cannot read data file {p}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{p}: empty file") from None
        if len(header) < 2 or header[0].lower() != "id" or header[1].lower() != "y":
            raise DataError(f"{p}: header must start with 'id,y'")
        has_time = header[-1].lower() == "time"
        if any(h.lower() in ("id", "y", "time") for h in header[2:len(header) - has_time]):
            raise DataError(f"{p}: columns id, y and time are reserved; rename the covariate")
        cov_names = header[2:-1] if has_time else header[2:]
        ncol = len(header)
        blocks: dict[str, list] = {}
        order: list[str] = []
        last = None
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != ncol:
                raise DataError(f"{p}: row {lineno}: expected {ncol} fields, got {len(row)}")
            cid = row[0].strip()
            if cid != last and cid in blocks:
                raise DataError(f"{p}: row {lineno}: rows of cluster {cid!r} are not contiguous")
            try:
                yv = float(row[1])
                vals = [float(c) for c in row[2:]]
            except ValueError:
                raise DataError(f"{p}: row {lineno}: non-numeric field") from None
            if yv < 0 or yv != int(yv):
                raise DataError(f"{p}: row {lineno}: response must be a nonnegative integer")
            if not all(np.isfinite(vals)):
                raise DataError(f"{p}: row {lineno}: non-finite value")
            if cid not in blocks:
                blocks[cid] = []
                order.append(cid)
            blocks[cid].append((lineno, int(yv), vals))
            last = cid
    if not order:
        raise DataError(f"{p}: no data rows")
    clusters = []
    for cid in order:
        rows = blocks[cid]
        y = np.array([r[1] for r in rows])
        vals = np.array([r[2] for r in rows], dtype=float).reshape(len(rows), -1)
        covs = vals[:, :-1] if has_time else vals
        X = np.column_stack([np.ones(len(rows)), covs])
        times = vals[:, -1] if has_time else None
        if times is not None and np.any(np.diff(times) <= 0):
            bad = rows[int(np.argmax(np.diff(times) <= 0)) + 1][0]
            raise DataError(f"{p}: row {bad}: time must increase strictly within cluster {cid!r}")
        clusters.append(Cluster(y, X, times))
    return Dataset(clusters, ["intercept", *cov_names])


def write_longitudinal_csv(data: Dataset, path, cluster_ids=None) -> None:
    """Inverse of :func:`read_longitudinal_csv`; drops the intercept column."""
    names = list(data.covariate_names)
    skip = 1 if names and names[0] == "intercept" else 0
    header = ["id", "y", *names[skip:]] + (["time"] if data.has_times else [])
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i, c in enumerate(data.clusters):
            cid = cluster_ids[i] if cluster_ids is not None else i + 1
            for j in range(c.dim):
                row = [cid, int(c.y[j]), *[repr(float(v)) for v in c.X[j, skip:]]]
                if data.has_times:
                    row.append(repr(float(c.times[j])))
                w.writerow(row)
