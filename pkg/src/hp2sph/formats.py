"""File formats: HPXM binary maps and CSV coefficient/spectrum tables.

HPXM layout (little endian)::

    offset  size  field
    0       4     magic b"HPXM"
    4       4     u32 version (= 1)
    8       4     u32 n_side
    12      1     u8 ordering (0 = RING)
    13      3     reserved, zero
    16      8N    f64 values in RING order, N = 12 n_side^2

CSV floats are written with ``repr``, the shortest string that parses back
to the same double, so parse -> write round trips are bit identical.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .baseline import MapValues
from .sphgrid import HealpixGrid, SphCoeffTriangle, build_grid

__all__ = [
    "MAGIC",
    "VERSION",
    "MapFormatError",
    "encode_map",
    "decode_map",
    "write_map",
    "read_map",
    "write_coeffs",
    "read_coeffs",
    "write_spectrum",
    "read_spectrum",
    "write_grid_table",
]

MAGIC = b"HPXM"
VERSION = 1
_HEADER = struct.Struct("<4sIIB3x")


class MapFormatError(ValueError):
    pass


def encode_map(map: MapValues) -> bytes:
    header = _HEADER.pack(MAGIC, VERSION, map.grid.n_side, 0)
    return header + np.asarray(map.values, dtype="<f8").tobytes()


def decode_map(data: bytes) -> MapValues:
    if len(data) < _HEADER.size:
        raise MapFormatError(f"file too short for an HPXM header ({len(data)} bytes)")
    magic, version, n_side, ordering = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise MapFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise MapFormatError(f"unsupported HPXM version {version}")
    if ordering != 0:
        raise MapFormatError(f"unsupported ordering {ordering} (only RING = 0)")
    try:
        grid = build_grid(n_side)
    except ValueError as exc:
        raise MapFormatError(str(exc)) from None
    payload = len(data) - _HEADER.size
    if payload != 8 * grid.n_points:
        raise MapFormatError(
            f"n_side={n_side} needs {8 * grid.n_points} payload bytes, found {payload}")
    values = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).astype(float)
    return MapValues(grid, values)


def write_map(path, map: MapValues) -> None:
    Path(path).write_bytes(encode_map(map))


def read_map(path) -> MapValues:
    return decode_map(Path(path).read_bytes())


def write_coeffs(path, coeffs: SphCoeffTriangle) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ell", "m", "re", "im"])
        for ell, m, z in coeffs.items():
            w.writerow([ell, m, repr(z.real), repr(z.imag)])


def read_coeffs(path) -> SphCoeffTriangle:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["ell", "m", "re", "im"]:
            raise ValueError(f"expected header ell,m,re,im, got {header}")
        rows = [(int(r[0]), int(r[1]), complex(float(r[2]), float(r[3]))) for r in reader if r]
    if not rows:
        raise ValueError("coefficient file has no rows")
    ell_max = max(r[0] for r in rows)
    out = SphCoeffTriangle.zeros(ell_max)
    for ell, m, z in rows:
        if abs(m) > ell or ell < 0:
            raise ValueError(f"invalid index (l={ell}, m={m})")
        out.data[ell, m + ell_max] = z
    return out


def write_spectrum(path, cl: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ell", "cl"])
        for ell, v in enumerate(np.asarray(cl, dtype=float)):
            w.writerow([ell, repr(float(v))])


def read_spectrum(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["ell", "cl"]:
            raise ValueError(f"expected header ell,cl, got {header}")
        rows = [(int(r[0]), float(r[1])) for r in reader if r]
    cl = np.zeros(len(rows))
    for ell, v in rows:
        cl[ell] = v
    return cl


def write_grid_table(path, grid: HealpixGrid) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "theta", "count", "phi0", "first_pixel"])
        for i, ring in enumerate(grid.rings):
            w.writerow([i, repr(ring.theta), ring.count, repr(ring.phi_offset), ring.first_index])
