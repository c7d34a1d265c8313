"""Binary snapshot format for spectral fields, shared repo-wide.

Layout (all integers little-endian u32):

    magic   4 bytes  "BSPC"
    version u32      currently 1
    dim     u32      2 or 3
    n       u32      points per axis
    rank    u32      1 = scalar, d = vector (component count)
    payload          little-endian f64 pairs (re, im), C order over the
                     rfftn half-spectrum array; vectors are component-major
                     (the full coefficient array flattened as stored).

Round-trips are bit-exact.
"""

import struct

import numpy as np

from .spectral import Grid, SpectralField

MAGIC = b"BSPC"
VERSION = 1
_HEADER = struct.Struct("<4sIIII")


class SnapshotError(ValueError):
    pass


def save_field(f: SpectralField, path) -> None:
    rank = f.grid.dim if f.is_vector else 1
    header = _HEADER.pack(MAGIC, VERSION, f.grid.dim, f.grid.n, rank)
    payload = np.ascontiguousarray(f.coeffs).astype("<c16", copy=False).tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def load_field(path) -> SpectralField:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise SnapshotError(f"{path}: truncated header")
        magic, version, dim, n, rank = _HEADER.unpack(head)
        if magic != MAGIC:
            raise SnapshotError(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise SnapshotError(
                f"{path}: snapshot version {version} not supported (want {VERSION})")
        grid = Grid(int(dim), int(n))
        shape = grid.spectral_shape if rank == 1 else (int(rank),) + grid.spectral_shape
        count = int(np.prod(shape))
        raw = fh.read(count * 16)
        if len(raw) != count * 16:
            raise SnapshotError(f"{path}: truncated payload")
        data = np.frombuffer(raw, dtype="<c16")
        return SpectralField(grid, data.reshape(shape).astype(np.complex128))
