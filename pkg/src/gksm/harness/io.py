"""Iteration CSV logs and the CIMG1 complex image format.

CIMG1 layout: an ASCII header line ``CIMG1 <rows> <cols>\\n`` followed by
``rows * cols`` pairs of little-endian float64 ``(real, imag)`` in row-major
order.
"""
from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from gksm.solver import IterationRecord

CSV_COLUMNS = ["iter", "wall_time_s", "cost", "data_term", "step_norm", "delta_k",
               "gradmap_norm", "subspace_dim", "lam_min", "lam_max", "enrich"]


def _fmt(v: float) -> str:
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(v, ".17g")


def write_iteration_csv(path, history: list[IterationRecord]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in history:
            w.writerow([r.iter, _fmt(r.wall_time), _fmt(r.cost), _fmt(r.data_term),
                        _fmt(r.step_norm), _fmt(r.delta_k), _fmt(r.gradmap_norm),
                        r.subspace_dim, _fmt(r.lam_min), _fmt(r.lam_max), r.enrich])


def read_iteration_csv(path) -> dict[str, np.ndarray]:
    """Columns of an iteration log; ``enrich`` stays a list of strings."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: empty iteration log")
    missing = set(CSV_COLUMNS) - set(rows[0])
    if missing:
        raise ValueError(f"{path}: missing columns {sorted(missing)}")
    out = {}
    for col in CSV_COLUMNS:
        if col == "enrich":
            out[col] = [r[col] for r in rows]
        else:
            out[col] = np.array([float(r[col]) for r in rows])
    return out


def write_cimg(path, image):
    image = np.asarray(image, dtype=np.complex128)
    if image.ndim != 2:
        raise ValueError("CIMG1 stores 2-D images")
    rows, cols = image.shape
    data = np.empty(2 * image.size, dtype="<f8")
    data[0::2] = image.real.ravel()
    data[1::2] = image.imag.ravel()
    with open(path, "wb") as fh:
        fh.write(f"CIMG1 {rows} {cols}\n".encode("ascii"))
        fh.write(data.tobytes())


def read_cimg(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    nl = raw.index(b"\n")
    magic, rows, cols = raw[:nl].decode("ascii").split()
    if magic != "CIMG1":
        raise ValueError(f"{path}: not a CIMG1 file")
    rows, cols = int(rows), int(cols)
    data = np.frombuffer(raw[nl + 1:], dtype="<f8")
    if data.size != 2 * rows * cols:
        raise ValueError(f"{path}: expected {2 * rows * cols} floats, found {data.size}")
    return (data[0::2] + 1j * data[1::2]).reshape(rows, cols)
