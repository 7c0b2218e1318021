"""Binary raster snapshots (``LMFG``) with an optional CSV mirror.

Layout: magic ``b"LMFG"``, version byte, dimension-count byte, one
little-endian ``uint32`` per axis, then the row-major data as little-endian
``float64``.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"LMFG"
VERSION = 1
CSV_MIRROR_MAX_CELLS = 10_000


class RasterError(ValueError):
    pass


def encode(arr) -> bytes:
    arr = np.asarray(arr, dtype="<f8")
    if not 1 <= arr.ndim <= 255:
        raise RasterError(f"cannot store a {arr.ndim}-dimensional array")
    head = MAGIC + struct.pack("<BB", VERSION, arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + np.ascontiguousarray(arr).tobytes(order="C")


def decode(buf: bytes) -> np.ndarray:
    if buf[:4] != MAGIC:
        raise RasterError("not an LMFG raster (bad magic)")
    if len(buf) < 6:
        raise RasterError("truncated LMFG header")
    version, ndim = struct.unpack_from("<BB", buf, 4)
    if version != VERSION:
        raise RasterError(f"unsupported LMFG version {version}")
    if len(buf) < 6 + 4 * ndim:
        raise RasterError("truncated LMFG header")
    shape = struct.unpack_from(f"<{ndim}I", buf, 6)
    off = 6 + 4 * ndim
    count = int(np.prod(shape))
    if len(buf) - off != 8 * count:
        raise RasterError(f"payload has {len(buf) - off} bytes, header promises {8 * count}")
    return np.frombuffer(buf, dtype="<f8", count=count, offset=off).reshape(shape).astype(np.float64)


def _csv_text(arr: np.ndarray) -> str:
    rows = arr.reshape(arr.shape[0], -1) if arr.ndim > 1 else arr.reshape(-1, 1)
    return "".join(",".join(repr(float(x)) for x in row) + "\n" for row in rows)


def write(path, arr) -> list[Path]:
    """Write ``arr`` to ``path``; returns every file written (raster, maybe CSV)."""
    path = Path(path)
    arr = np.asarray(arr, dtype=np.float64)
    path.write_bytes(encode(arr))
    out = [path]
    if arr.size <= CSV_MIRROR_MAX_CELLS:
        mirror = path.with_suffix(".csv")
        mirror.write_text(_csv_text(arr))
        out.append(mirror)
    return out


def read(path) -> np.ndarray:
    return decode(Path(path).read_bytes())
