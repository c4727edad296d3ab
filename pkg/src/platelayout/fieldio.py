"""CSV and 8-bit PGM serialization for 2-D fields."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .field import GridSpec, TemperatureField


def write_csv(path, values: np.ndarray) -> None:
    """Write a 2-D array row-major, one grid row per line.

    ``repr`` of a Python float is the shortest decimal that round-trips, so
    the text reproduces the doubles exactly.
    """
    values = np.asarray(values, dtype=np.float64)
    lines = (",".join(repr(float(v)) for v in row) for row in values)
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path) -> np.ndarray:
    rows = [line for line in Path(path).read_text().splitlines() if line.strip()]
    arr = np.array([[float(tok) for tok in row.split(",")] for row in rows], dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{path}: rows have inconsistent lengths")
    return arr


def read_field_csv(path) -> TemperatureField:
    values = read_csv(path)
    ny, nx = values.shape
    return TemperatureField(GridSpec(nx, ny), values)


def to_gray(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Linear map of ``[lo, hi]`` onto ``0..255`` with clipping."""
    values = np.asarray(values, dtype=np.float64)
    if hi <= lo:
        return np.zeros(values.shape, dtype=np.uint8)
    scaled = np.clip((values - lo) / (hi - lo), 0.0, 1.0) * 255.0
    return np.rint(scaled).astype(np.uint8)


def write_pgm(path, values: np.ndarray, lo: float = 0.0, hi: float = 1.0) -> None:
    gray = to_gray(values, lo, hi)
    ny, nx = gray.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{nx} {ny}\n255\n".encode("ascii"))
        fh.write(gray.tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    # Header is four whitespace-separated tokens: magic, width, height, maxval.
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    nx, ny, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit PGM is supported")
    pixels = np.frombuffer(data[pos + 1:pos + 1 + nx * ny], dtype=np.uint8)
    return pixels.reshape(ny, nx)
