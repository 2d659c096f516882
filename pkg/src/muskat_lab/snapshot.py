"""MUSK1 binary snapshots and CSV export of grid arrays.

Layout: 8-byte magic ``MUSK1\\0\\0\\0``, little-endian u32 n, f64 period,
f64 time, then n*n little-endian f64 values in row-major order.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .kernel import InterfaceField, PeriodicGrid

MAGIC = b"MUSK1\x00\x00\x00"
_HEADER = struct.Struct("<8sIdd")


class SnapshotError(ValueError):
    pass


def write_snapshot(path, field: InterfaceField) -> None:
    n = field.grid.n
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, n, field.grid.period, field.time))
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())


def read_snapshot(path) -> InterfaceField:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise SnapshotError("file too short for a MUSK1 header")
    magic, n, period, time = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise SnapshotError("bad magic; not a MUSK1 snapshot")
    body = data[_HEADER.size :]
    if len(body) != 8 * n * n:
        raise SnapshotError(f"expected {8 * n * n} data bytes, found {len(body)}")
    values = np.frombuffer(body, dtype="<f8").reshape(n, n).astype(float)
    return InterfaceField(PeriodicGrid(n, period), values, time)


def write_csv(path, grid: PeriodicGrid, values: np.ndarray) -> None:
    """One row per grid point: x1, x2, value."""
    x1, x2 = grid.coords()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x1", "x2", "value"])
        for a, b, v in zip(x1.ravel(), x2.ravel(), np.asarray(values).ravel()):
            w.writerow([repr(float(a)), repr(float(b)), repr(float(v))])
