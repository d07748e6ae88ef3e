"""CSV series with a provenance comment row."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np


class NonFiniteError(ArithmeticError):
    def __init__(self, path, column: str):
        self.path = str(path)
        self.column = column
        super().__init__(f"non-finite value in column {column!r} of {path}")


def write_series(path, columns: dict, config_hash: str, seed: int) -> Path:
    """Write equal-length numeric columns.

    Row 1 holds the column names, row 2 the comment ``# config=<hash>
    seed=<seed>``, and values use 17 significant digits. Non-finite values
    raise :class:`NonFiniteError` before anything is written.
    """
    path = Path(path)
    names = list(columns)
    data = [np.asarray(columns[k], dtype=float).reshape(-1) for k in names]
    lengths = {len(c) for c in data}
    if len(lengths) > 1:
        raise ValueError(f"columns of {path.name} differ in length: {sorted(lengths)}")
    for name, col in zip(names, data):
        if not np.all(np.isfinite(col)):
            raise NonFiniteError(path, name)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        fh.write(f"# config={config_hash} seed={seed}\n")
        for row in zip(*data):
            writer.writerow(["%.17g" % v for v in row])
    return path


def read_series(path):
    """Return ``(columns, meta)`` with ``columns`` a dict of float arrays."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    names = rows[0]
    meta = {}
    comment = rows[1][0] if len(rows) > 1 and rows[1] else ""
    if not comment.startswith("#"):
        raise ValueError(f"{path} lacks the provenance comment row")
    for token in comment.lstrip("# ").split():
        key, _, value = token.partition("=")
        meta[key] = value
    body = np.array(rows[2:], dtype=float).reshape(-1, len(names))
    return {name: body[:, k] for k, name in enumerate(names)}, meta
