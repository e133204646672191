"""Latent buffers and the LMT / CSV / PGM file formats.

Latent videos are plain ``numpy`` arrays of shape ``(N, C, h, w)``; boolean
grids (new-perspective regions, foreground masks) are ``(N, h, w)`` bool
arrays.

LMT layout (all little-endian)::

    offset 0   b"LMT\\x01"
    offset 4   uint32 kind   0 = latent f32, 1 = bool grid u8, 2 = attention f32
    offset 8   uint32 N
    offset 12  uint32 C      (1 for bool grids, token count L for attention)
    offset 16  uint32 h
    offset 20  uint32 w
    offset 24  payload, (frame, channel, row, col) order
"""

import contextlib
import csv
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import FormatError, NumericError, ShapeError

MAGIC = b"LMT\x01"
HEADER = struct.Struct("<4s5I")
KIND_LATENT = 0
KIND_BOOL = 1
KIND_ATTENTION = 2
_KIND_DTYPE = {KIND_LATENT: "<f4", KIND_BOOL: "u1", KIND_ATTENTION: "<f4"}


def as_latent(data, shape=None):
    """Validate and return ``data`` as a finite 4-D float array."""
    arr = np.asarray(data)
    if arr.ndim != 4:
        raise ShapeError(("N", "C", "h", "w"), arr.shape, "latent")
    if shape is not None and arr.shape != tuple(shape):
        raise ShapeError(shape, arr.shape, "latent")
    if not np.all(np.isfinite(arr)):
        raise NumericError("latent contains non-finite values")
    return arr


def as_grid(data, shape=None):
    arr = np.asarray(data)
    if arr.ndim != 3:
        raise ShapeError(("N", "h", "w"), arr.shape, "bool grid")
    if shape is not None and arr.shape != tuple(shape):
        raise ShapeError(shape, arr.shape, "bool grid")
    return arr.astype(bool, copy=False)


@contextlib.contextmanager
def atomic_open(path, mode="wb", newline=None):
    """Write to a temp file next to ``path`` and rename it into place on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        kwargs = {} if "b" in mode else {"encoding": "utf-8", "newline": newline}
        with os.fdopen(fd, mode, **kwargs) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def encode_lmt(array, kind=None):
    arr = np.asarray(array)
    if kind is None:
        kind = KIND_BOOL if arr.dtype == bool else KIND_LATENT
    if kind == KIND_BOOL:
        grid = as_grid(arr)
        n, h, w = grid.shape
        header = HEADER.pack(MAGIC, kind, n, 1, h, w)
        return header + grid.astype("u1").tobytes(order="C")
    lat = as_latent(arr)
    n, c, h, w = lat.shape
    header = HEADER.pack(MAGIC, kind, n, c, h, w)
    return header + lat.astype("<f4").tobytes(order="C")


def decode_lmt(buf, expect_kind=None):
    """Parse LMT bytes; returns ``(kind, array)``."""
    if len(buf) < HEADER.size:
        raise FormatError(f"truncated header: need {HEADER.size} bytes, have {len(buf)}", len(buf))
    magic, kind, n, c, h, w = HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0)
    if kind not in _KIND_DTYPE:
        raise FormatError(f"unknown kind tag {kind}", 4)
    if expect_kind is not None and kind not in expect_kind:
        raise FormatError(f"kind {kind} not accepted here (want {sorted(expect_kind)})", 4)
    if kind == KIND_BOOL and c != 1:
        raise FormatError(f"bool grid must have C == 1, got {c}", 12)
    dtype = np.dtype(_KIND_DTYPE[kind])
    count = n * c * h * w
    need = HEADER.size + count * dtype.itemsize
    if len(buf) < need:
        raise FormatError(f"truncated payload: need {need} bytes, have {len(buf)}", len(buf))
    if len(buf) > need:
        raise FormatError(f"{len(buf) - need} trailing bytes after payload", need)
    payload = np.frombuffer(buf, dtype=dtype, count=count, offset=HEADER.size)
    if kind == KIND_BOOL:
        if np.any(payload > 1):
            bad = int(np.flatnonzero(payload > 1)[0])
            raise FormatError("bool grid payload must be 0 or 1", HEADER.size + bad)
        return kind, payload.reshape(n, h, w).astype(bool)
    return kind, payload.reshape(n, c, h, w).astype(np.float32)


def write_lmt(array, path, kind=None):
    """Write a latent (float, 4-D) or bool grid (3-D) to ``path`` atomically."""
    data = encode_lmt(array, kind)
    with atomic_open(path, "wb") as fh:
        fh.write(data)


def read_lmt(path, expect_kind=None):
    """Read an LMT file and return the array (float32 4-D or bool 3-D)."""
    return decode_lmt(Path(path).read_bytes(), expect_kind)[1]


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):#.9g}"
    return str(value)


def write_csv(path, header, rows):
    """Write ``rows`` under ``header``; floats carry 9 significant digits."""
    header = list(header)
    lines = []
    for i, row in enumerate(rows):
        row = list(row)
        if len(row) != len(header):
            raise ValueError(f"row {i}: expected {len(header)} fields, got {len(row)}")
        lines.append([_fmt(v) for v in row])
    with atomic_open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(lines)


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader]


def write_pgm(image, path):
    """Binary 8-bit grayscale (P5, maxval 255)."""
    img = np.asarray(image)
    if img.ndim != 2:
        raise ShapeError(("h", "w"), img.shape, "image")
    h, w = img.shape
    with atomic_open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.clip(img, 0, 255).astype(np.uint8).tobytes())


def read_pgm(path):
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise FormatError("not a P5 image", 0)
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise FormatError(f"unsupported maxval {maxval}", pos)
    pos += 1
    return np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos).reshape(h, w)
