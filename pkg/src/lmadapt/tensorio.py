"""Binary tensor container ("LTB1"): named nd-arrays, bit-exact round-trip.

Layout, all little-endian: magic "LTB1"; u32 tensor count; then per tensor
u16 name length, UTF-8 name, u8 dtype code, u8 rank, rank x u64 dims,
row-major payload. Files are written atomically (temp + rename).
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"LTB1"

_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<i8")}
_CODES = {dt: code for code, dt in _DTYPES.items()}


def save_tensors(path: str | Path, tensors: dict[str, np.ndarray]) -> None:
    path = Path(path)
    blobs = []
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name])
        dt = arr.dtype.newbyteorder("<")
        if dt not in _CODES:
            raise ValueError(f"tensor {name!r} has unsupported dtype {arr.dtype}")
        if dt.kind == "f" and not np.isfinite(arr).all():
            raise ValueError(f"tensor {name!r} contains non-finite values")
        enc = name.encode("utf-8")
        header = struct.pack("<H", len(enc)) + enc
        header += struct.pack("<BB", _CODES[dt], arr.ndim)
        header += struct.pack(f"<{arr.ndim}Q", *arr.shape) if arr.ndim else b""
        blobs.append(header + arr.astype(dt, copy=False).tobytes())
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blobs)))
        for blob in blobs:
            fh.write(blob)
    tmp.replace(path)


def load_tensors(path: str | Path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ValueError(f"{path}: not an LTB1 tensor container")
    (count,) = struct.unpack_from("<I", data, 4)
    pos = 8
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos : pos + name_len].decode("utf-8")
        pos += name_len
        code, rank = struct.unpack_from("<BB", data, pos)
        pos += 2
        if code not in _DTYPES:
            raise ValueError(f"{path}: unknown dtype code {code} for tensor {name!r}")
        shape = struct.unpack_from(f"<{rank}Q", data, pos) if rank else ()
        pos += 8 * rank
        dt = _DTYPES[code]
        n_bytes = int(np.prod(shape, dtype=np.int64)) * dt.itemsize if rank else dt.itemsize
        arr = np.frombuffer(data[pos : pos + n_bytes], dtype=dt).reshape(shape).copy()
        pos += n_bytes
        out[name] = arr
    if pos != len(data):
        raise ValueError(f"{path}: trailing bytes after last tensor")
    return out
