"""File formats: EFOS binary fields, CSV field export, plain-text tensors.

EFOS layout (all little-endian)::

    b"EFOS"  u8 version(=1)
    u32 n  u32 N  u32 M[n]  f64 L[n]  u8 rank (1 = vector, 2 = gradient)
    f64 data[...]   grid-point-major, last axis fastest, components innermost
"""
from __future__ import annotations

import csv
import struct

import numpy as np

from .core import EllipticTensor, GradientField, GridSpec, VectorField

MAGIC = b"EFOS"
VERSION = 1


class FormatError(ValueError):
    pass


def write_efos(path, field):
    grid = field.grid
    rank = 2 if isinstance(field, GradientField) else 1
    header = bytearray(MAGIC)
    header += struct.pack("<B", VERSION)
    header += struct.pack("<II", grid.n, field.N)
    header += struct.pack(f"<{grid.n}I", *grid.shape)
    header += struct.pack(f"<{grid.n}d", *grid.lengths)
    header += struct.pack("<B", rank)
    with open(path, "wb") as fh:
        fh.write(bytes(header))
        fh.write(np.ascontiguousarray(field.data, dtype="<f8").tobytes())


def read_efos(path):
    """Read an EFOS file, returning a VectorField or GradientField."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}")
    pos = 4
    (version,) = struct.unpack_from("<B", raw, pos)
    pos += 1
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    n, N = struct.unpack_from("<II", raw, pos)
    pos += 8
    shape = struct.unpack_from(f"<{n}I", raw, pos)
    pos += 4 * n
    lengths = struct.unpack_from(f"<{n}d", raw, pos)
    pos += 8 * n
    (rank,) = struct.unpack_from("<B", raw, pos)
    pos += 1
    grid = GridSpec(shape, lengths)
    if rank == 1:
        tail = (N,)
    elif rank == 2:
        tail = (N, n)
    else:
        raise FormatError(f"{path}: unknown rank {rank}")
    count = grid.size * int(np.prod(tail))
    if len(raw) - pos != 8 * count:
        raise FormatError(f"{path}: expected {8 * count} data bytes, found {len(raw) - pos}")
    data = np.frombuffer(raw, dtype="<f8", count=count, offset=pos).astype(np.float64)
    data = data.reshape(grid.shape + tail)
    return VectorField(grid, data) if rank == 1 else GradientField(grid, data)


def write_field_csv(path, field):
    """One row per grid point: coordinates x1..xn, then components."""
    grid = field.grid
    pts = grid.points()
    vals = field.data.reshape(grid.size, -1)
    names = [f"x{i + 1}" for i in range(grid.n)]
    if isinstance(field, GradientField):
        names += [f"D{j + 1}u{a + 1}" for a in range(field.N) for j in range(grid.n)]
    else:
        names += [f"u{a + 1}" for a in range(field.N)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for p, v in zip(pts, vals):
            w.writerow([repr(float(t)) for t in p] + [repr(float(t)) for t in v])


def format_tensor(A):
    """Text form: first line ``n N``, then coefficients in (alpha, beta, j) order."""
    lines = [f"{A.n} {A.N}"]
    for a in range(A.N):
        for b in range(A.N):
            lines.append(" ".join(repr(float(v)) for v in A.entries[a, b]))
    return "\n".join(lines) + "\n"


def parse_tensor(text):
    tokens = text.split()
    if len(tokens) < 2:
        raise FormatError("tensor text needs a header line 'n N'")
    n, N = int(tokens[0]), int(tokens[1])
    vals = [float(t) for t in tokens[2:]]
    if len(vals) != N * N * n:
        raise FormatError(f"expected {N * N * n} coefficients for n={n}, N={N}, got {len(vals)}")
    return EllipticTensor(np.array(vals).reshape(N, N, n))


def write_tensor(path, A):
    with open(path, "w") as fh:
        fh.write(format_tensor(A))


def read_tensor(path):
    with open(path) as fh:
        return parse_tensor(fh.read())
