"""Plain-CSV matrix files: one matrix row per line, comma separated, no header.

Values are written with 17 significant digits so a write/read round trip
reproduces every float64 exactly.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .errors import DecompositionError

__all__ = ["MatrixParseError", "read_matrix", "write_matrix", "format_float", "write_csv"]


class MatrixParseError(DecompositionError):
    def __init__(self, path, line: int, column: int, message: str):
        self.path, self.line, self.column = str(path), line, column
        super().__init__(f"{path}:{line}:{column}: {message}")


def format_float(x: float) -> str:
    return format(float(x), ".17g")


def read_matrix(path) -> np.ndarray:
    """Parse a dense matrix; line and column numbers in errors are 1-based."""
    path = Path(path)
    rows: list[list[float]] = []
    width = None
    with path.open(newline="") as fh:
        for lineno, fields in enumerate(csv.reader(fh), start=1):
            if not fields or all(not f.strip() for f in fields):
                continue
            row = []
            for col, text in enumerate(fields, start=1):
                try:
                    value = float(text)
                except ValueError:
                    raise MatrixParseError(path, lineno, col, f"not a number: {text.strip()!r}") from None
                if not math.isfinite(value):
                    raise MatrixParseError(path, lineno, col, f"non-finite value {text.strip()!r}")
                row.append(value)
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise MatrixParseError(
                    path, lineno, min(len(row), width) + 1, f"expected {width} columns, found {len(row)}"
                )
            rows.append(row)
    if not rows:
        raise MatrixParseError(path, 1, 1, "empty matrix file")
    return np.array(rows, dtype=np.float64)


def write_matrix(path, a) -> None:
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    np.savetxt(path, a, fmt="%.17g", delimiter=",")


def write_csv(path, header: list[str], rows: list[dict]) -> None:
    """Write dict rows under ``header`` to a path or open text stream.

    Floats use :func:`format_float`; booleans are written as 0/1.
    """

    def cell(v):
        if isinstance(v, bool):
            return str(int(v))
        if isinstance(v, (float, np.floating)):
            return format_float(v)
        return "" if v is None else str(v)

    def dump(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([cell(row.get(k)) for k in header])

    if hasattr(path, "write"):
        dump(path)
    else:
        with open(path, "w", newline="") as fh:
            dump(fh)
