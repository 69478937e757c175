"""MGMF binary tensor blobs.

Layout (all little-endian)::

    b"MGMF" | version:u32 | rank:u32 | dims:u32 * rank | data:float32 * prod(dims)

Values are stored row-major as float32 and widened to float64 on load.
Several blobs may be concatenated in one file; :func:`read_blob_at` reads the
one starting at a byte offset.
"""
from __future__ import annotations

import struct
from pathlib import Path
from typing import BinaryIO

import numpy as np

from ..errors import DataError

MAGIC = b"MGMF"
VERSION = 1


def pack_blob(array) -> bytes:
    a = np.asarray(array)
    if a.ndim == 0:
        a = a.reshape(1)
    if any(n < 1 for n in a.shape):
        raise DataError(f"blob dimensions must be positive, got {a.shape}")
    header = MAGIC + struct.pack(f"<II{a.ndim}I", VERSION, a.ndim, *a.shape)
    return header + np.ascontiguousarray(a, dtype="<f4").tobytes()


def unpack_blob(buf: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Decode one blob at ``offset``; returns (float64 array, end offset)."""
    if buf[offset:offset + 4] != MAGIC:
        raise DataError(f"bad magic at byte {offset}: {buf[offset:offset + 4]!r}")
    try:
        version, rank = struct.unpack_from("<II", buf, offset + 4)
    except struct.error:
        raise DataError("truncated blob header") from None
    if version != VERSION:
        raise DataError(f"unsupported blob version {version}")
    pos = offset + 12
    try:
        dims = struct.unpack_from(f"<{rank}I", buf, pos)
    except struct.error:
        raise DataError("truncated blob header") from None
    pos += 4 * rank
    count = int(np.prod(dims)) if rank else 0
    end = pos + 4 * count
    if end > len(buf):
        raise DataError(f"blob payload truncated: need {end - pos} bytes, have {len(buf) - pos}")
    data = np.frombuffer(buf, dtype="<f4", count=count, offset=pos)
    return data.astype(np.float64).reshape(dims), end


def write_blob(path: str | Path, array) -> None:
    Path(path).write_bytes(pack_blob(array))


def read_blob(path: str | Path) -> np.ndarray:
    buf = Path(path).read_bytes()
    arr, end = unpack_blob(buf)
    if end != len(buf):
        raise DataError(f"{path}: {len(buf) - end} trailing bytes after blob")
    return arr


def read_blob_header(path: str | Path) -> tuple[int, ...]:
    with open(path, "rb") as f:
        head = f.read(12)
        if head[:4] != MAGIC or len(head) < 12:
            raise DataError(f"{path}: not an MGMF blob")
        _, rank = struct.unpack("<II", head[4:])
        return struct.unpack(f"<{rank}I", f.read(4 * rank))


def read_blob_at(f: BinaryIO, offset: int) -> np.ndarray:
    f.seek(offset)
    head = f.read(12)
    _, rank = struct.unpack("<II", head[4:12])
    dims_raw = f.read(4 * rank)
    count = int(np.prod(struct.unpack(f"<{rank}I", dims_raw)))
    arr, _ = unpack_blob(head + dims_raw + f.read(4 * count))
    return arr
