"""File formats: TNS1 tensors and binary PGM/PPM images.

TNS1 is the package's tensor container: magic bytes ``TNS1``, a little-endian
u32 ndim, ndim little-endian u32 dims, then float32 little-endian data in
row-major order.  Feature maps, flattened column matrices, and model weights
all travel in it.  Images and label maps use binary PGM (P5) and PPM (P6),
8-bit or 16-bit big-endian per the netpbm convention.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

__all__ = [
    "read_tns",
    "write_tns",
    "read_pnm",
    "write_pgm",
    "write_ppm",
]

TNS_MAGIC = b"TNS1"


def write_tns(path, array: np.ndarray) -> None:
    """Write an array as TNS1 (data is cast to little-endian float32)."""
    arr = np.ascontiguousarray(array, dtype="<f4")
    path = Path(path)
    with path.open("wb") as f:
        f.write(TNS_MAGIC)
        f.write(struct.pack("<I", arr.ndim))
        f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        f.write(arr.tobytes())


def read_tns(path) -> np.ndarray:
    """Read a TNS1 file back into a float32 array."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != TNS_MAGIC:
        raise ValueError(f"{path}: not a TNS1 file")
    (ndim,) = struct.unpack_from("<I", raw, 4)
    if ndim == 0 or ndim > 8:
        raise ValueError(f"{path}: implausible ndim {ndim}")
    dims = struct.unpack_from(f"<{ndim}I", raw, 8)
    offset = 8 + 4 * ndim
    count = int(np.prod(dims))
    data = np.frombuffer(raw, dtype="<f4", count=count, offset=offset)
    if data.size != count:
        raise ValueError(f"{path}: truncated data, expected {count} float32 values")
    return data.reshape(dims).copy()


def _read_pnm_header(raw: bytes):
    """Parse a PNM header: magic, width, height, maxval; returns data offset."""
    pos = 0

    def next_token():
        nonlocal pos
        while pos < len(raw):
            ch = raw[pos : pos + 1]
            if ch == b"#":
                while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                    pos += 1
            elif ch.isspace():
                pos += 1
            else:
                break
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError("truncated PNM header")
        return raw[start:pos]

    magic = next_token()
    width = int(next_token())
    height = int(next_token())
    maxval = int(next_token())
    pos += 1  # single whitespace byte separates header from raster
    return magic, width, height, maxval, pos


def read_pnm(path) -> tuple[np.ndarray, int]:
    """Read a binary PGM (P5) or PPM (P6) file.

    Returns (array, maxval): shape (H, W) for PGM, (H, W, 3) for PPM, with
    integer sample values in [0, maxval].  16-bit rasters are big-endian.
    """
    path = Path(path)
    raw = path.read_bytes()
    magic, width, height, maxval, offset = _read_pnm_header(raw)
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"{path}: unsupported PNM magic {magic!r} (binary P5/P6 only)")
    if not 0 < maxval < 65536:
        raise ValueError(f"{path}: invalid maxval {maxval}")
    channels = 3 if magic == b"P6" else 1
    dtype = ">u2" if maxval > 255 else "u1"
    count = width * height * channels
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=offset)
    if data.size != count:
        raise ValueError(f"{path}: truncated raster data")
    arr = data.astype(np.int64).reshape(
        (height, width, 3) if channels == 3 else (height, width)
    )
    return arr, maxval


def write_pgm(path, values: np.ndarray, maxval: int = 255) -> None:
    """Write a (H, W) integer array as binary PGM; 16-bit when maxval > 255."""
    arr = np.asarray(values)
    if arr.ndim != 2:
        raise ValueError(f"PGM wants a (height, width) array, got shape {arr.shape}")
    if not 0 < maxval < 65536:
        raise ValueError(f"invalid maxval {maxval}")
    clipped = np.clip(np.rint(arr), 0, maxval)
    dtype = ">u2" if maxval > 255 else "u1"
    path = Path(path)
    with path.open("wb") as f:
        f.write(f"P5\n{arr.shape[1]} {arr.shape[0]}\n{maxval}\n".encode("ascii"))
        f.write(clipped.astype(dtype).tobytes())


def write_ppm(path, rgb: np.ndarray, maxval: int = 255) -> None:
    """Write a (H, W, 3) array of [0, 1] floats or integers as binary PPM."""
    arr = np.asarray(rgb)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"PPM wants a (height, width, 3) array, got shape {arr.shape}")
    if not 0 < maxval < 65536:
        raise ValueError(f"invalid maxval {maxval}")
    if np.issubdtype(arr.dtype, np.floating):
        arr = np.rint(arr * maxval)
    clipped = np.clip(arr, 0, maxval)
    dtype = ">u2" if maxval > 255 else "u1"
    path = Path(path)
    with path.open("wb") as f:
        f.write(f"P6\n{arr.shape[1]} {arr.shape[0]}\n{maxval}\n".encode("ascii"))
        f.write(clipped.astype(dtype).tobytes())
