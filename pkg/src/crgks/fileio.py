"""CSV, binary PGM and JSON writers with byte-stable output."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "format_float",
    "write_rows",
    "write_vector_csv",
    "read_vector_csv",
    "write_pgm",
    "read_pgm",
    "write_json",
]


def format_float(value) -> str:
    """Shortest round-tripping text for a float; empty for ``None`` or NaN."""
    if value is None:
        return ""
    value = float(value)
    if np.isnan(value):
        return ""
    return repr(value)


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    return str(value)


def write_rows(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """Comma-separated file with a header row and ``\\n`` line endings."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    return path


def write_vector_csv(path: str | Path, x, name: str = "value") -> Path:
    """Two-column ``index,<name>`` file, zero-based index."""
    x = np.asarray(x, dtype=float).ravel()
    return write_rows(path, ("index", name), ((i, v) for i, v in enumerate(x)))


def read_vector_csv(path: str | Path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        return np.array([float(row[1]) for row in reader])


def write_pgm(
    path: str | Path,
    image,
    bits: int = 8,
    vmin: float | None = None,
    vmax: float | None = None,
) -> Path:
    """Binary (P5) graymap of a 2D array, rows written top to bottom.

    Intensities are mapped linearly from ``[vmin, vmax]`` (default: the
    data range) onto ``[0, 2**bits - 1]`` and clipped.  16-bit samples are
    big-endian as the format requires.
    """
    if bits not in (8, 16):
        raise ValueError("bits must be 8 or 16")
    img = np.asarray(image, dtype=float)
    if img.ndim != 2:
        raise ValueError("PGM needs a 2D array")
    lo = float(np.min(img)) if vmin is None else float(vmin)
    hi = float(np.max(img)) if vmax is None else float(vmax)
    maxval = (1 << bits) - 1
    if hi > lo:
        scaled = (img - lo) / (hi - lo) * maxval
    else:
        scaled = np.zeros_like(img)
    pixels = np.clip(np.rint(scaled), 0, maxval)
    dtype = np.uint8 if bits == 8 else np.dtype(">u2")
    rows, cols = img.shape
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n{maxval}\n".encode("ascii"))
        fh.write(pixels.astype(dtype).tobytes(order="C"))
    return path


def read_pgm(path: str | Path) -> np.ndarray:
    """Read a binary PGM written by :func:`write_pgm` (no comment lines)."""
    data = Path(path).read_bytes()
    fields = []
    pos = 0
    while len(fields) < 4:
        while data[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos].decode("ascii"))
    pos += 1
    magic, cols, rows, maxval = fields[0], int(fields[1]), int(fields[2]), int(fields[3])
    if magic != "P5":
        raise ValueError(f"not a binary graymap: {magic!r}")
    dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
    return np.frombuffer(data, dtype=dtype, count=rows * cols, offset=pos).reshape(rows, cols)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def write_json(path: str | Path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path
