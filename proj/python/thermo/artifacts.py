"""Readers for energy.csv, legacy VTK structured points and report.json."""

import csv
import json
from pathlib import Path

import numpy as np

from ._core import energy_csv_header


class ArtifactError(ValueError):
    pass


def read_energy_csv(path):
    """Returns a dict of column name to float array; the header must match the frozen one."""
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise ArtifactError(f"{path}: empty file")
    expected = energy_csv_header().split(",")
    if rows[0] != expected:
        raise ArtifactError(f"{path}: header does not match the frozen energy.csv header")
    if len(rows) < 2:
        raise ArtifactError(f"{path}: no data rows")
    body = rows[1:]
    for k, r in enumerate(body, start=2):
        if len(r) != len(expected):
            raise ArtifactError(f"{path}:{k}: expected {len(expected)} fields, got {len(r)}")
    data = np.array(body, dtype=float)
    return {name: data[:, j] for j, name in enumerate(expected)}


def read_report(path):
    with open(path) as f:
        return json.load(f)


def _line(buf, pos):
    end = buf.index(b"\n", pos)
    return buf[pos:end].decode("ascii"), end + 1


def read_vtk(path):
    """Parses a binary legacy VTK structured-points file with cell data.

    Returns (dims, spacing, fields); scalars have shape (ny, nx), vectors (ny, nx, 3).
    """
    buf = Path(path).read_bytes()
    pos = 0
    header, pos = _line(buf, pos)
    if not header.startswith("# vtk DataFile"):
        raise ArtifactError(f"{path}: not a legacy VTK file")
    _, pos = _line(buf, pos)
    fmt, pos = _line(buf, pos)
    if fmt != "BINARY":
        raise ArtifactError(f"{path}: expected BINARY, got {fmt}")
    dims = spacing = None
    ncells = None
    fields = {}
    while pos < len(buf):
        line, pos = _line(buf, pos)
        tok = line.split()
        if not tok:
            continue
        if tok[0] == "DATASET" and tok[1] != "STRUCTURED_POINTS":
            raise ArtifactError(f"{path}: unsupported dataset {tok[1]}")
        if tok[0] == "DIMENSIONS":
            dims = tuple(int(t) for t in tok[1:4])
        elif tok[0] == "SPACING":
            spacing = tuple(float(t) for t in tok[1:4])
        elif tok[0] == "CELL_DATA":
            ncells = int(tok[1])
        elif tok[0] in ("SCALARS", "VECTORS"):
            if ncells is None or dims is None:
                raise ArtifactError(f"{path}: field before CELL_DATA")
            width = 1 if tok[0] == "SCALARS" else 3
            if tok[0] == "SCALARS":
                _, pos = _line(buf, pos)  # LOOKUP_TABLE
            count = ncells * width
            arr = np.frombuffer(buf, dtype=">f8", count=count, offset=pos).astype(float)
            pos += 8 * count
            nx, ny = max(dims[0] - 1, 1), max(dims[1] - 1, 1)
            fields[tok[1]] = arr.reshape((ny, nx) if width == 1 else (ny, nx, 3))
    if dims is None or not fields:
        raise ArtifactError(f"{path}: no structured-points data")
    return dims, spacing, fields
