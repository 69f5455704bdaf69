"""File formats: binary PGM images, ``.sino`` sinograms, JSON and CSV.

Every writer goes through a temporary file in the target directory followed
by a rename, so readers never see a half-written file.
"""

from __future__ import annotations

import contextlib
import csv
import json
import math
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .transform import AngleGrid, Sinogram

__all__ = [
    "atomic_write",
    "read_pgm",
    "write_pgm",
    "read_sino",
    "write_sino",
    "read_json",
    "write_json",
    "write_csv",
]

SINO_MAGIC = b"SINO"
# magic, M, R, T, angle spacing in degrees
SINO_HEADER = struct.Struct("<4sIIId")


@contextlib.contextmanager
def atomic_write(path, mode: str = "wb"):
    """Open a temporary sibling of ``path`` and rename it into place on success."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        kwargs = {"newline": ""} if "b" not in mode else {}
        with os.fdopen(fd, mode, **kwargs) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def _pgm_tokens(data: bytes, count: int):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise ValueError("truncated PGM header")
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates the header from the raster
    return tokens, pos + 1


def read_pgm(path) -> np.ndarray:
    """Read a binary (P5) PGM with 8- or 16-bit samples as a float array."""
    data = Path(path).read_bytes()
    tokens, pos = _pgm_tokens(data, 4)
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise ValueError(f"{path}: malformed PGM header") from exc
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise ValueError(f"{path}: invalid PGM dimensions or maxval")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    n = width * height * dtype.itemsize
    raster = data[pos:pos + n]
    if len(raster) != n:
        raise ValueError(f"{path}: PGM raster is truncated")
    return np.frombuffer(raster, dtype=dtype).reshape(height, width).astype(float)


def write_pgm(path, image, maxval: int = 65535) -> None:
    """Write a P5 PGM; values are rounded and clipped to ``[0, maxval]``."""
    img = np.asarray(image, dtype=float)
    if img.ndim != 2:
        raise ValueError("PGM images must be 2-D")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite pixels")
    if not 0 < maxval < 65536:
        raise ValueError("maxval must lie in [1, 65535]")
    dtype = ">u2" if maxval > 255 else "u1"
    raster = np.clip(np.rint(img), 0, maxval).astype(dtype)
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n{maxval}\n".encode()
    with atomic_write(path) as fh:
        fh.write(header)
        fh.write(raster.tobytes())


def write_sino(path, sino: Sinogram) -> None:
    n_r, n_t = sino.values.shape
    header = SINO_HEADER.pack(SINO_MAGIC, sino.size, n_r, n_t, sino.grid.spacing)
    with atomic_write(path) as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(sino.values, dtype="<f8").tobytes())


def read_sino(path) -> Sinogram:
    data = Path(path).read_bytes()
    if len(data) < SINO_HEADER.size:
        raise ValueError(f"{path}: truncated .sino header")
    magic, size, n_r, n_t, spacing = SINO_HEADER.unpack_from(data)
    if magic != SINO_MAGIC:
        raise ValueError(f"{path}: not a .sino file")
    if not math.isclose(spacing, 180.0 / n_t, rel_tol=1e-12):
        raise ValueError(f"{path}: angle spacing {spacing} does not match {n_t} angles")
    body = data[SINO_HEADER.size:]
    if len(body) != 8 * n_r * n_t:
        raise ValueError(f"{path}: expected {n_r * n_t} values")
    values = np.frombuffer(body, dtype="<f8").reshape(n_r, n_t).astype(float)
    return Sinogram(values, size, AngleGrid(n_t))


def _jsonable(obj):
    if isinstance(obj, float) and math.isinf(obj):
        return "inf" if obj > 0 else "-inf"
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


def write_json(path, obj) -> None:
    """Write JSON with sorted keys; infinities become ``"inf"`` strings."""
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False)
    with atomic_write(path, "w") as fh:
        fh.write(text + "\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def write_csv(path, header, rows) -> None:
    with atomic_write(path, "w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
