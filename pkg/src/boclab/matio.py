"""Matrix file IO: the BOCM binary format and headered CSV.

BOCM layout: magic bytes ``BOCM``, then three little-endian u32 fields
(version, rows, cols), then rows*cols row-major float64 little-endian.

The CSV flavor carries a one-line ``rows,cols`` header followed by one
comma-separated row per line.  Floats are written with ``repr`` precision
so that write/read round-trips are bit exact and outputs are byte stable.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import InputError

MAGIC = b"BOCM"
VERSION = 1

_HEADER = struct.Struct("<4sIII")


def write_bocm(path: str | Path, matrix: np.ndarray) -> None:
    """Write a 2-D float array to ``path`` in BOCM format."""
    m = np.ascontiguousarray(np.atleast_2d(np.asarray(matrix, dtype=np.float64)))
    if m.ndim != 2:
        raise InputError(f"BOCM stores 2-D matrices, got ndim={m.ndim}")
    rows, cols = m.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, rows, cols))
        fh.write(m.astype("<f8").tobytes(order="C"))


def read_bocm(path: str | Path) -> np.ndarray:
    """Read a BOCM file back into a float64 matrix."""
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise InputError(f"{path}: truncated BOCM header")
        magic, version, rows, cols = _HEADER.unpack(header)
        if magic != MAGIC:
            raise InputError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        if version != VERSION:
            raise InputError(f"{path}: unsupported BOCM version {version}")
        payload = fh.read(8 * rows * cols)
    if len(payload) != 8 * rows * cols:
        raise InputError(f"{path}: truncated BOCM payload")
    return np.frombuffer(payload, dtype="<f8").reshape(rows, cols).copy()


def write_csv_matrix(path: str | Path, matrix: np.ndarray) -> None:
    """Write a matrix as CSV with a ``rows,cols`` header line."""
    m = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    rows, cols = m.shape
    lines = [f"{rows},{cols}"]
    for row in m:
        lines.append(",".join(repr(float(x)) for x in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv_matrix(path: str | Path) -> np.ndarray:
    """Read a ``rows,cols``-headered CSV matrix."""
    text = Path(path).read_text().strip()
    if not text:
        raise InputError(f"{path}: empty CSV matrix file")
    lines = text.splitlines()
    try:
        rows, cols = (int(tok) for tok in lines[0].split(","))
    except ValueError as exc:
        raise InputError(f"{path}: malformed rows,cols header: {lines[0]!r}") from exc
    if len(lines) - 1 != rows:
        raise InputError(f"{path}: header says {rows} rows, found {len(lines) - 1}")
    out = np.empty((rows, cols), dtype=np.float64)
    for i, line in enumerate(lines[1:]):
        vals = line.split(",")
        if len(vals) != cols:
            raise InputError(f"{path}: row {i} has {len(vals)} values, expected {cols}")
        out[i] = [float(v) for v in vals]
    return out
