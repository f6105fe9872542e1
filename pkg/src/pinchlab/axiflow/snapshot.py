"""Binary snapshot format.

Layout (little endian)::

    b"AXFL"                      magic
    uint32 version               = 1
    uint32 nz, nr
    float64 z_min, z_max, r_max, t, eps_reg
    float64[nz * nr]             u, r index fastest
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"AXFL"
VERSION = 1
_HEAD = struct.Struct("<4sIII5d")


class SnapshotFormatError(ValueError):
    pass


def write_snapshot(path, field, eps_reg: float) -> None:
    g = field.grid
    head = _HEAD.pack(MAGIC, VERSION, g.nz, g.nr, g.z_min, g.z_max, g.r_max, field.t, eps_reg)
    body = np.ascontiguousarray(field.u, dtype="<f8").tobytes()
    tmp = Path(str(path) + ".part")
    tmp.write_bytes(head + body)
    tmp.replace(path)


def read_snapshot(path, z_bc: str = "extrapolate", with_eps: bool = False, grid=None):
    """Load a snapshot.

    Pass the run's ``grid`` when resuming: the spacing recomputed from the
    header can differ from the original by one ulp, which would break
    bit-exact continuation.
    """
    from .solver import Field, Grid2D

    raw = Path(path).read_bytes()
    if len(raw) < _HEAD.size:
        raise SnapshotFormatError(f"{path}: truncated header")
    magic, version, nz, nr, z_min, z_max, r_max, t, eps = _HEAD.unpack_from(raw)
    if magic != MAGIC:
        raise SnapshotFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise SnapshotFormatError(f"{path}: unsupported version {version}")
    if len(raw) != _HEAD.size + 8 * nz * nr:
        raise SnapshotFormatError(f"{path}: payload size mismatch")
    u = np.frombuffer(raw, dtype="<f8", offset=_HEAD.size).reshape(nz, nr).astype(np.float64)
    if grid is None:
        grid = Grid2D(z_min, r_max / (nr - 1), nz, nr, z_bc)
    elif (grid.nz, grid.nr) != (nz, nr) or grid.z_min != z_min:
        raise SnapshotFormatError(f"{path}: snapshot does not match the given grid")
    if abs(grid.z_max - z_max) > 1e-9 * max(1.0, abs(z_max)):
        raise SnapshotFormatError(f"{path}: non-uniform spacing in header")
    fld = Field(grid, u, t)
    return (fld, eps) if with_eps else fld
