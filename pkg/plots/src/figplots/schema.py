"""CSV schemas of the harness artifacts and strict loading.

The renderers are plumbing: every number drawn must come out of one of
these tables unchanged, so loading is the only place that looks at the
content at all. Anything off-contract raises SchemaError before any
output file is touched.
"""

import csv

import numpy as np

RASTER_S_HEADER = ("threshold", "x", "y", "member")
RASTER_T_HEADER = ("kappa", "x", "y", "member", "similarity")
TRACE_HEADER = ("step", "h", "delta", "delta_defined", "C", "s_flag",
                "dist_opt", "pca_x", "pca_y", "opt_pca_x", "opt_pca_y")
CURVES_HEADER = ("layer", "mean", "q1", "median", "q3")


class SchemaError(ValueError):
    """Input CSV does not match the harness schema for the figure kind."""


def load_columns(path, *headers):
    """Read a harness CSV and return {column name: float array}.

    ``headers`` lists the admissible headers for the figure kind; the
    file's own header picks one. Raises SchemaError on a missing or
    unreadable file, a header matching none of them, an empty table, a
    ragged row, or any cell that does not parse as a finite float.
    """
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise SchemaError(f"{path}: cannot read ({exc})") from exc
    if not rows:
        raise SchemaError(f"{path}: empty file")
    matches = [h for h in headers if tuple(rows[0]) == tuple(h)]
    if not matches:
        expected = " or ".join(repr(list(h)) for h in headers)
        raise SchemaError(f"{path}: header {rows[0]!r} does not match {expected}")
    header = matches[0]
    if len(rows) == 1:
        raise SchemaError(f"{path}: no data rows")
    data = np.empty((len(rows) - 1, len(header)))
    for i, row in enumerate(rows[1:]):
        if len(row) != len(header):
            raise SchemaError(f"{path}: row {i + 1} has {len(row)} cells")
        for j, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError as exc:
                raise SchemaError(
                    f"{path}: row {i + 1} cell {header[j]!r} is not a number"
                ) from exc
            if not np.isfinite(v):
                raise SchemaError(
                    f"{path}: row {i + 1} cell {header[j]!r} is not finite")
            data[i, j] = v
    return {name: data[:, j] for j, name in enumerate(header)}
