"""Tabular results rendered as CSV and as aligned text."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        if not np.isfinite(v):
            return "nan" if np.isnan(v) else ("inf" if v > 0 else "-inf")
        return f"{v:.10g}"
    return str(v)


@dataclass
class Table:
    columns: list
    rows: list = field(default_factory=list)
    title: str = ""
    meta: dict = field(default_factory=dict)
    payload: Optional[object] = field(default=None, repr=False)  # full result objects, not rendered

    def add(self, *values) -> None:
        if len(values) != len(self.columns):
            raise ValueError("row length does not match columns")
        self.rows.append(list(values))

    def column(self, name: str) -> list:
        j = self.columns.index(name)
        return [r[j] for r in self.rows]

    def where(self, **conds) -> list[dict]:
        out = []
        for r in self.rows:
            rec = dict(zip(self.columns, r))
            if all(rec.get(k) == v for k, v in conds.items()):
                out.append(rec)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        for k, v in self.meta.items():
            buf.write(f"# {k}: {v}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_fmt(v) for v in r])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        Path(path).write_text(self.to_csv())

    def to_text(self, precision: int = 4) -> str:
        def cell(v):
            if isinstance(v, (float, np.floating)) and np.isfinite(v):
                return f"{v:.{precision}f}"
            return _fmt(v)
        body = [[cell(v) for v in r] for r in self.rows]
        widths = [max([len(str(c))] + [len(b[j]) for b in body]) for j, c in enumerate(self.columns)]
        lines = []
        if self.title:
            lines.append(self.title)
        lines.append("  ".join(str(c).rjust(w) for c, w in zip(self.columns, widths)))
        lines.append("  ".join("-" * w for w in widths))
        lines += ["  ".join(b[j].rjust(widths[j]) for j in range(len(widths))) for b in body]
        return "\n".join(lines) + "\n"
