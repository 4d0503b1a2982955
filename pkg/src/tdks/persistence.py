"""Ledger CSV, JSON reports and binary checkpoints.

Checkpoint layout (little-endian)::

    b"TDKS"  u32 version  u32 nx ny nz  u32 n_orbitals  u32 n_steps
    then (n_steps + 1) snapshots of n_orbitals * nx*ny*nz complex values,
    each stored as a (real, imag) pair of float64.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import asdict, is_dataclass
from pathlib import Path

import numpy as np

from .diagnostics import LEDGER_FIELDS, LedgerRow
from .errors import FormatError, TruncationError
from .fields import GridSpec
from .propagator import Trajectory

MAGIC = b"TDKS"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIIIII")


def write_ledger(rows, path) -> None:
    rows = getattr(rows, "ledger", rows)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LEDGER_FIELDS)
        for r in rows:
            w.writerow([format(float(v), ".17g") for v in r.as_tuple()])


def read_ledger(path) -> list[LedgerRow]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != LEDGER_FIELDS:
            raise FormatError(f"unexpected ledger header {header}")
        return [LedgerRow(*(float(v) for v in row)) for row in reader]


def _jsonable(obj):
    if is_dataclass(obj):
        return {k: _jsonable(v) for k, v in asdict(obj).items()}
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def write_report(report, path) -> None:
    Path(path).write_text(json.dumps(_jsonable(report), indent=2) + "\n")


def write_table(rows: list[dict], path) -> None:
    if not rows:
        Path(path).write_text("")
        return
    with open(path, "w", newline="") as fh:
        names = list(dict.fromkeys(k for r in rows for k in r))
        w = csv.DictWriter(fh, fieldnames=names)
        w.writeheader()
        for r in rows:
            w.writerow({k: format(v, ".17g") if isinstance(v, float) else v for k, v in r.items()})


def checkpoint(traj: Trajectory, path) -> None:
    if not traj.states:
        raise ValueError("cannot checkpoint an empty trajectory")
    n_orb = traj.states[0].shape[0] if traj.states else 0
    nx, ny, nz = traj.grid.points
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, nx, ny, nz, n_orb, max(len(traj.states) - 1, 0)))
        for psi in traj.states:
            fh.write(np.ascontiguousarray(psi, dtype="<c16").tobytes())


def restore(path, grid: GridSpec, dt: float) -> Trajectory:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise TruncationError(f"checkpoint {path} is shorter than its header")
    magic, version, nx, ny, nz, n_orb, n_steps = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"checkpoint format version {version}, this build reads version {FORMAT_VERSION}")
    if (nx, ny, nz) != grid.points:
        raise FormatError(f"checkpoint grid {(nx, ny, nz)} does not match {grid.points}")
    per = n_orb * nx * ny * nz * 16
    expected = _HEADER.size + (n_steps + 1) * per
    if len(data) < expected:
        raise TruncationError(f"checkpoint {path} holds {len(data)} bytes, expected {expected}")
    if len(data) > expected:
        raise FormatError(f"checkpoint {path} has {len(data) - expected} trailing bytes")
    traj = Trajectory(grid, dt)
    for k in range(n_steps + 1):
        off = _HEADER.size + k * per
        arr = np.frombuffer(data, dtype="<c16", count=per // 16, offset=off)
        traj.states.append(arr.astype(complex).reshape(n_orb, nx, ny, nz))
        traj.times.append(k * dt)
    return traj
