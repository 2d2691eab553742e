"""Binary matrix files, bit-exact.

Layout, all little-endian:

    bytes 0..3    magic b"HSLF"
    bytes 4..7    format version, uint32 (currently 1)
    byte  8       dtype code, uint8: 0 = float32, 1 = float64
    bytes 9..16   rows, uint64
    bytes 17..24  cols, uint64
    bytes 25..    payload, row-major

Loads always return float64 (float32 payloads are promoted). A float64
save/load round trip reproduces the array bit for bit.
"""

from __future__ import annotations

import os
import struct
from typing import Iterator

import numpy as np

from .types import ContractError

MAGIC = b"HSLF"
VERSION = 1

_HEADER = struct.Struct("<4sIBQQ")
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {"float32": 0, "float64": 1}


class FileFormatError(ContractError):
    """The file is not a valid matrix container."""


def save_matrix(path, a: np.ndarray, dtype: str = "float64") -> None:
    """Write `a` to `path`; `dtype` picks the on-disk precision."""
    if dtype not in _CODES:
        raise ContractError(f"dtype must be float32 or float64, got {dtype!r}")
    arr = np.asarray(a)
    if arr.ndim != 2:
        raise ContractError(f"only 2-d arrays are supported, got shape {arr.shape}")
    code = _CODES[dtype]
    payload = np.ascontiguousarray(arr, dtype=_DTYPES[code])
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, code, arr.shape[0], arr.shape[1]))
        f.write(payload.tobytes(order="C"))


def _read_header(f, path) -> tuple[np.dtype, int, int]:
    raw = f.read(_HEADER.size)
    if len(raw) != _HEADER.size:
        raise FileFormatError(f"{path}: truncated header")
    magic, version, code, rows, cols = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise FileFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FileFormatError(f"{path}: unsupported version {version}")
    if code not in _DTYPES:
        raise FileFormatError(f"{path}: unknown dtype code {code}")
    if rows < 1 or cols < 1:
        raise FileFormatError(f"{path}: invalid shape ({rows}, {cols})")
    return _DTYPES[code], rows, cols


def _check_size(path, dtype: np.dtype, rows: int, cols: int) -> None:
    expected = _HEADER.size + rows * cols * dtype.itemsize
    actual = os.path.getsize(path)
    if actual != expected:
        raise FileFormatError(f"{path}: expected {expected} bytes, file has {actual}")


def load_matrix(path) -> np.ndarray:
    """Read a whole matrix as float64."""
    with open(path, "rb") as f:
        dtype, rows, cols = _read_header(f, path)
        _check_size(path, dtype, rows, cols)
        data = f.read(rows * cols * dtype.itemsize)
    arr = np.frombuffer(data, dtype=dtype).reshape(rows, cols)
    return arr.astype(np.float64)


def read_shape(path) -> tuple[int, int]:
    """Matrix dimensions without loading the payload."""
    with open(path, "rb") as f:
        _, rows, cols = _read_header(f, path)
    return rows, cols


def load_matrix_blocks(path, block_rows: int = 8192) -> Iterator[np.ndarray]:
    """Stream row blocks as float64 without holding the whole payload."""
    if block_rows < 1:
        raise ContractError(f"block_rows must be >= 1, got {block_rows}")
    with open(path, "rb") as f:
        dtype, rows, cols = _read_header(f, path)
        _check_size(path, dtype, rows, cols)
        done = 0
        while done < rows:
            take = min(block_rows, rows - done)
            data = f.read(take * cols * dtype.itemsize)
            block = np.frombuffer(data, dtype=dtype).reshape(take, cols)
            yield block.astype(np.float64)
            done += take
