"""Output formats: 17-digit CSV, binary PGM heatmaps, atomic file writes."""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np


def fmt(v: float) -> str:
    return "%.17g" % v


def csv_text(header: list[str], columns) -> str:
    cols = [np.asarray(c, dtype=float).ravel() for c in columns]
    lines = [",".join(header)]
    for row in zip(*cols):
        lines.append(",".join(fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def read_csv(path) -> dict[str, np.ndarray]:
    text = Path(path).read_text()
    rows = text.strip("\n").split("\n")
    header = rows[0].split(",")
    data = np.array([[float(v) for v in r.split(",")] for r in rows[1:]]).reshape(-1, len(header))
    return {name: data[:, i] for i, name in enumerate(header)}


def pgm_bytes(field: np.ndarray) -> bytes:
    """8-bit P5 image of ``field`` (NaN drawn as 0), rows top to bottom = decreasing y."""
    field = np.asarray(field, dtype=float)
    finite = field[np.isfinite(field)]
    lo = float(finite.min()) if finite.size else 0.0
    hi = float(finite.max()) if finite.size else 0.0
    span = hi - lo
    scaled = np.zeros(field.shape)
    if span > 0:
        scaled = (field - lo) / span * 255.0
    img = np.where(np.isfinite(field), np.rint(scaled), 0).clip(0, 255).astype(np.uint8)
    img = img[::-1]
    h, w = img.shape
    head = f"P5\n# min={fmt(lo)} max={fmt(hi)}\n{w} {h}\n255\n".encode("ascii")
    return head + img.tobytes()


def write_atomic(path, data: str | bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"newline": "\n", "encoding": "utf-8"})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path
