"""Binary state snapshots and the time-series CSV writer.

Snapshot layout (all little-endian): 8-byte magic, uint32 version,
uint32 nx, ny, nz, then float64 b, sigma, t, then the row-major float64
arrays psi (nx*ny) and v1, v2, v3 (nx*ny*nz each).  The format is exact:
a write/read round trip reproduces every bit.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .diagnostics import CSV_COLUMNS, DiagnosticsRecord

MAGIC = b"EFSBCSNP"
VERSION = 1
_HEADER = struct.Struct("<8sIIIIddd")


class SnapshotError(ValueError):
    pass


def write_snapshot(
    path: str | Path, t: float, b: float, sigma: float, psi: np.ndarray, v: np.ndarray
) -> None:
    nx, ny = psi.shape
    nz = v.shape[3]
    if v.shape != (3, nx, ny, nz):
        raise SnapshotError(f"velocity shape {v.shape} does not match surface {psi.shape}")
    head = _HEADER.pack(MAGIC, VERSION, nx, ny, nz, float(b), float(sigma), float(t))
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(np.ascontiguousarray(psi, dtype="<f8").tobytes())
        for i in range(3):
            fh.write(np.ascontiguousarray(v[i], dtype="<f8").tobytes())


def read_snapshot(path: str | Path):
    """-> (t, b, sigma, psi, v); raises SnapshotError on any mismatch."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise SnapshotError("file shorter than the snapshot header")
    magic, version, nx, ny, nz, b, sigma, t = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise SnapshotError(f"bad magic {magic!r}")
    if version != VERSION:
        raise SnapshotError(f"snapshot version {version} unsupported (expected {VERSION})")
    surf = nx * ny
    vol = surf * nz
    expected = _HEADER.size + 8 * (surf + 3 * vol)
    if len(raw) != expected:
        raise SnapshotError(
            f"payload is {len(raw)} bytes, dims {nx}x{ny}x{nz} require {expected}"
        )
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    psi = body[:surf].reshape(nx, ny).copy()
    v = np.stack(
        [body[surf + i * vol : surf + (i + 1) * vol].reshape(nx, ny, nz).copy() for i in range(3)]
    )
    return t, b, sigma, psi, v


def write_timeseries(path: str | Path, history: list[DiagnosticsRecord]) -> None:
    lines = [",".join(CSV_COLUMNS)]
    for rec in history:
        # repr of a Python float round-trips the exact binary value
        lines.append(",".join(repr(float(x)) for x in rec.row()))
    Path(path).write_text("\n".join(lines) + "\n")


def read_timeseries(path: str | Path) -> list[DiagnosticsRecord]:
    lines = Path(path).read_text().strip().split("\n")
    header = lines[0].split(",")
    if tuple(header) != CSV_COLUMNS:
        raise SnapshotError(f"unexpected time-series header {header}")
    out = []
    for line in lines[1:]:
        vals = [float(x) for x in line.split(",")]
        out.append(DiagnosticsRecord(*vals))
    return out
