"""State and diagnostics persistence.

Binary state files (states.bin)
-------------------------------
Little-endian throughout, independent of the host platform.

64-byte file header:

    offset  size  field
    0       8     magic  b"MCLSTAT1"
    8       4     nx     uint32
    12      4     ny     uint32
    16      4     nz     uint32
    20      4     m      uint32
    24      4     q      int32   (field angle sigma = q / p)
    28      4     p      int32
    32      8     nu     float64
    40      8     alpha  float64
    48      8     delta0 float64
    56      8     reserved, zero

followed by zero or more fixed-size records until end of file:

    t        float64   absolute time
    t_frame  float64   shear age of the coefficient frame
    u        3 * nx * ny * nz complex128, C order (component, kx, jy, lz)
    b        same layout as u

Complex values are stored as interleaved (re, im) float64 pairs, which
is exactly the numpy "<c16" memory layout.  Coefficients use fftfreq
index ordering on every axis, matching the in-memory convention.

CSV outputs
-----------
Scalar diagnostics use repr() for floats so that a reload or a byte
comparison is exact; all files are UTF-8 with a mandatory header row.
"""

from __future__ import annotations

import csv
import hashlib
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .spectral import (
    GridSpec,
    MhdState,
    PhysParams,
    RationalShearAngle,
    SpectralVectorField,
)

STATE_MAGIC = b"MCLSTAT1"
_HEADER = struct.Struct("<8s4I2i3d8x")
HEADER_BYTES = _HEADER.size
_RECORD_HEAD = struct.Struct("<2d")

DIAGNOSTIC_COLUMNS = (
    "t",
    "energy_u",
    "energy_b",
    "energy_total",
    "flux_integral",
    "div_defect",
    "herm_defect",
    "umax",
)


def _payload_count(grid: GridSpec) -> int:
    return 3 * grid.nx * grid.ny * grid.nz


class StateWriter:
    """Streaming writer for states.bin; usable as a run observer via
    ``append``.  The header is fixed by the grid and parameters given
    at construction; appended states must match them."""

    def __init__(self, path, grid: GridSpec, params: PhysParams):
        self.grid = grid
        self.params = params
        self.count = 0
        self._fh = open(path, "wb")
        self._fh.write(
            _HEADER.pack(
                STATE_MAGIC,
                grid.nx,
                grid.ny,
                grid.nz,
                grid.m,
                params.sigma.q,
                params.sigma.p,
                params.nu,
                params.alpha,
                params.delta0,
            )
        )

    def append(self, state: MhdState) -> None:
        if state.grid != self.grid:
            raise ValueError("state grid does not match the file header")
        self._fh.write(_RECORD_HEAD.pack(state.t, state.t_frame))
        self._fh.write(np.ascontiguousarray(state.u.coeffs, dtype="<c16").tobytes())
        self._fh.write(np.ascontiguousarray(state.b.coeffs, dtype="<c16").tobytes())
        self.count += 1

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "StateWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def write_states(path, states: Iterable[MhdState]) -> int:
    """Write all states (same grid and parameters) to path; returns the
    record count.  At least one state is required to fix the header."""
    it = iter(states)
    try:
        first = next(it)
    except StopIteration:
        raise ValueError("cannot infer a file header from zero states") from None
    with StateWriter(path, first.grid, first.params) as w:
        w.append(first)
        for st in it:
            w.append(st)
        return w.count


def _read_header(raw: bytes, path) -> tuple[GridSpec, PhysParams]:
    if len(raw) < HEADER_BYTES:
        raise ValueError(f"{path}: truncated header")
    magic, nx, ny, nz, m, q, p, nu, alpha, delta0 = _HEADER.unpack(raw[:HEADER_BYTES])
    if magic != STATE_MAGIC:
        raise ValueError(f"{path}: not a state file (bad magic {magic!r})")
    grid = GridSpec(int(nx), int(ny), int(nz), int(m))
    params = PhysParams(nu=nu, alpha=alpha, sigma=RationalShearAngle(int(q), int(p)), delta0=delta0)
    return grid, params


def read_states(path, params: PhysParams | None = None) -> list[MhdState]:
    """Load every record.  ``params`` overrides the stored parameters
    (the coefficients themselves are parameter-free), which permits
    reusing a stored state across a viscosity family."""
    raw = Path(path).read_bytes()
    grid, stored = _read_header(raw, path)
    if params is None:
        params = stored
    n = _payload_count(grid)
    rec_bytes = _RECORD_HEAD.size + 2 * n * 16
    body = raw[HEADER_BYTES:]
    if len(body) % rec_bytes:
        raise ValueError(f"{path}: truncated record (file size mismatch)")
    out = []
    for r in range(len(body) // rec_bytes):
        chunk = body[r * rec_bytes : (r + 1) * rec_bytes]
        t, t_frame = _RECORD_HEAD.unpack(chunk[: _RECORD_HEAD.size])
        flat = np.frombuffer(chunk, dtype="<c16", offset=_RECORD_HEAD.size, count=2 * n)
        shape = (3, grid.nx, grid.ny, grid.nz)
        u = flat[:n].reshape(shape).astype(np.complex128)
        b = flat[n:].reshape(shape).astype(np.complex128)
        out.append(
            MhdState(
                SpectralVectorField(grid, u, t_frame),
                SpectralVectorField(grid, b, t_frame),
                t,
                params,
            )
        )
    return out


def load_state(path, params: PhysParams | None = None, index: int = -1) -> MhdState:
    """Load one record (default: the last) from a state file."""
    states = read_states(path, params)
    if not states:
        raise ValueError(f"{path}: no state records")
    return states[index]


# ---------------------------------------------------------------------------
# CSV diagnostics

def write_diagnostics_csv(path, traj) -> None:
    """Scalar per-sample trajectory diagnostics, one row per sample."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DIAGNOSTIC_COLUMNS)
        for i in range(traj.times.size):
            w.writerow(
                [
                    repr(float(traj.times[i])),
                    repr(float(traj.energy_u[i])),
                    repr(float(traj.energy_b[i])),
                    repr(float(traj.energy_u[i] + traj.energy_b[i])),
                    repr(float(traj.flux_integral[i])),
                    repr(float(traj.div_defect[i])),
                    repr(float(traj.herm_defect[i])),
                    repr(float(traj.umax[i])),
                ]
            )


def write_table_csv(path, columns: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Generic tidy CSV: floats via repr for byte-stable reruns."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(columns))
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


# ---------------------------------------------------------------------------
# content digests

def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def tree_digest(root, exclude: Sequence[str] = ("log.txt", "record.json")) -> str:
    """Order-independent digest of a directory tree: sha256 over the
    sorted (relative path, file digest) pairs.  Excluded names cover
    files that legitimately differ between reruns (logs, wall times)."""
    root = Path(root)
    h = hashlib.sha256()
    for f in sorted(p for p in root.rglob("*") if p.is_file()):
        if f.name in exclude:
            continue
        h.update(str(f.relative_to(root)).encode())
        h.update(b"\0")
        h.update(bytes.fromhex(file_digest(f)))
        h.update(b"\0")
    return h.hexdigest()
