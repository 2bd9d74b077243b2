"""Input validation helpers.

Two flavors: ``check_*`` functions coerce and raise (DataError), while the
``*_problems`` functions return lists of human-readable violations so callers
that report errors as data (graph validation, corpus loading) can aggregate.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from .errors import DataError

BboxLike = Sequence[float]


def as_float_vector(x, name: str) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise DataError(f"{name} must be 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise DataError(f"{name} contains non-finite values")
    return v


def as_float_matrix(x, name: str, *, nonnegative: bool = False) -> np.ndarray:
    m = np.asarray(x, dtype=np.float64)
    if m.ndim != 2:
        raise DataError(f"{name} must be 2-D, got shape {m.shape}")
    if m.size == 0:
        raise DataError(f"{name} must be non-empty")
    if not np.all(np.isfinite(m)):
        raise DataError(f"{name} contains non-finite values")
    if nonnegative and np.any(m < 0):
        raise DataError(f"{name} contains negative values")
    return m


def check_marginal(a, size: int, name: str) -> np.ndarray:
    v = as_float_vector(a, name)
    if v.shape[0] != size:
        raise DataError(f"{name} has length {v.shape[0]}, expected {size}")
    if np.any(v <= 0):
        raise DataError(f"{name} must be strictly positive")
    return v


def check_equal_mass(a: np.ndarray, b: np.ndarray, *, rtol: float = 1e-9) -> None:
    ma, mb = float(a.sum()), float(b.sum())
    if abs(ma - mb) > rtol * max(ma, mb, 1.0):
        raise DataError(f"marginal masses differ: {ma!r} vs {mb!r}")


def check_positive(x: float, name: str) -> float:
    x = float(x)
    if not np.isfinite(x) or x <= 0:
        raise DataError(f"{name} must be a positive finite number, got {x!r}")
    return x


def check_unit_interval(x: float, name: str) -> float:
    x = float(x)
    if not np.isfinite(x) or not 0.0 <= x <= 1.0:
        raise DataError(f"{name} must lie in [0, 1], got {x!r}")
    return x


def span_problems(start: object, end: object, caption_len: int, label: str) -> list[str]:
    out: list[str] = []
    if not isinstance(start, int) or not isinstance(end, int):
        return [f"{label}: span offsets must be integers, got ({start!r}, {end!r})"]
    if start < 0:
        out.append(f"{label}: span start {start} is negative")
    if end <= start:
        out.append(f"{label}: span end {end} is not after start {start}")
    if end > caption_len:
        out.append(f"{label}: span end {end} exceeds caption length {caption_len}")
    return out


def bbox_problems(bbox: BboxLike, image_size: tuple[float, float] | None, label: str) -> list[str]:
    out: list[str] = []
    if len(bbox) != 4:
        return [f"{label}: bbox must have 4 coordinates, got {len(bbox)}"]
    x0, y0, x1, y1 = (float(c) for c in bbox)
    if not all(np.isfinite(c) for c in (x0, y0, x1, y1)):
        return [f"{label}: bbox has non-finite coordinates"]
    if x1 <= x0:
        out.append(f"{label}: bbox x1 {x1} is not right of x0 {x0}")
    if y1 <= y0:
        out.append(f"{label}: bbox y1 {y1} is not below y0 {y0}")
    if image_size is not None:
        w, h = image_size
        if x0 < 0 or y0 < 0 or x1 > w or y1 > h:
            out.append(f"{label}: bbox {(x0, y0, x1, y1)} exceeds image bounds {(w, h)}")
    return out
