"""Binary dataset container.

Layout (all little-endian)::

    magic    4 bytes   b"OB1T"
    version  uint32
    m, n, s  uint64 x 3
    matrix   m*n float64, row-major
    y        m int8 (+-1)
    flips    m uint8 (1 = sign was flipped)
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = ["MAGIC", "VERSION", "Dataset", "write_dataset", "read_dataset"]

MAGIC = b"OB1T"
VERSION = 1
_HEADER = struct.Struct("<4sIQQQ")


@dataclass(frozen=True)
class Dataset:
    matrix: np.ndarray
    y: np.ndarray
    flip_mask: np.ndarray
    s: int

    @property
    def m(self):
        return self.matrix.shape[0]

    @property
    def n(self):
        return self.matrix.shape[1]


def write_dataset(path, matrix, y, flip_mask, s: int) -> None:
    matrix = np.ascontiguousarray(matrix, dtype="<f8")
    y = np.asarray(y)
    flip_mask = np.asarray(flip_mask, dtype=bool)
    m, n = matrix.shape
    if y.shape != (m,) or flip_mask.shape != (m,):
        raise ValueError(f"y and flip_mask must have length m={m}")
    if not np.all(np.abs(y) == 1):
        raise ValueError("y must contain only -1 and +1")
    path = Path(path)
    try:
        with path.open("wb") as fh:
            fh.write(_HEADER.pack(MAGIC, VERSION, m, n, int(s)))
            fh.write(matrix.tobytes(order="C"))
            fh.write(y.astype("i1").tobytes())
            fh.write(flip_mask.astype("u1").tobytes())
    except OSError as exc:
        raise OSError(f"cannot write dataset to {path}: {exc}") from exc


def read_dataset(path) -> Dataset:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read dataset {path}: {exc}") from exc
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, version, m, n, s = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported container version {version}")
    expected = _HEADER.size + 8 * m * n + 2 * m
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(raw)}")
    off = _HEADER.size
    matrix = np.frombuffer(raw, dtype="<f8", count=m * n, offset=off).reshape(m, n).astype(float)
    off += 8 * m * n
    y = np.frombuffer(raw, dtype="i1", count=m, offset=off).astype(np.int8)
    off += m
    flips = np.frombuffer(raw, dtype="u1", count=m, offset=off).astype(bool)
    return Dataset(matrix=matrix, y=y, flip_mask=flips, s=int(s))
