"""Plain-text datasets: a ``# dim=<d> n=<n>`` header, then one whitespace-separated sample per line."""
from __future__ import annotations

import re

import numpy as np

from .errors import DataFormatError

_HEADER = re.compile(r"^#\s*dim\s*=\s*(\d+)\s+n\s*=\s*(\d+)\s*$")


def read_dataset(path) -> np.ndarray:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataFormatError(f"{path}: empty file")
    m = _HEADER.match(lines[0].strip())
    if not m:
        raise DataFormatError(f"{path}: line 1: expected header '# dim=<d> n=<n>'")
    d, n = int(m.group(1)), int(m.group(2))
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        try:
            vals = [float(v) for v in s.split()]
        except ValueError:
            raise DataFormatError(f"{path}: line {lineno}: non-numeric value") from None
        if len(vals) != d:
            raise DataFormatError(f"{path}: line {lineno}: expected {d} values, got {len(vals)}")
        rows.append(vals)
    if len(rows) != n:
        raise DataFormatError(f"{path}: header declares n={n} but found {len(rows)} samples")
    x = np.array(rows, dtype=float).reshape(n, d)
    if not np.all(np.isfinite(x)):
        raise DataFormatError(f"{path}: non-finite values")
    return x


def write_dataset(path, x) -> None:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    with open(path, "w") as fh:
        fh.write(f"# dim={x.shape[1]} n={x.shape[0]}\n")
        for row in x:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
