"""Delimited output tables with a metadata comment line."""

import hashlib
import io
import math
from dataclasses import dataclass, field


def format_value(v):
    if isinstance(v, str):
        return v
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, int):
        return str(v)
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if v == 0.0:
        return "0"
    return f"{v:.12g}"


def config_hash(items):
    """Short stable digest of resolved ``key=value`` pairs."""
    text = "\n".join(f"{k}={items[k]}" for k in sorted(items))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass
class CsvTable:
    columns: list
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def add(self, *values):
        if len(values) != len(self.columns):
            raise ValueError(f"row has {len(values)} values, table has {len(self.columns)} columns")
        self.rows.append(list(values))

    def column(self, name):
        k = self.columns.index(name)
        return [r[k] for r in self.rows]

    def render(self):
        buf = io.StringIO()
        meta = " ".join(f"{k}={v}" for k, v in self.meta.items())
        buf.write(f"# {meta}\n")
        buf.write(",".join(self.columns) + "\n")
        for row in self.rows:
            buf.write(",".join(format_value(v) for v in row) + "\n")
        return buf.getvalue()

    def write(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write(self.render())


def read_table(path):
    """Parse a table written by :meth:`CsvTable.write` back into header and string rows."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    meta_line, header, *body = lines
    meta = dict(tok.split("=", 1) for tok in meta_line.lstrip("# ").split() if "=" in tok)
    return CsvTable(columns=header.split(","), rows=[r.split(",") for r in body], meta=meta)
