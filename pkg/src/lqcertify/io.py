"""Plain-text matrix/vector readers and writers."""

from __future__ import annotations

from pathlib import Path

import numpy as np


class FileFormatError(OSError):
    pass


def read_matrix_csv(path) -> np.ndarray:
    """Comma-separated reals, one matrix row per line, no header."""
    path = Path(path)
    try:
        a = np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)
    except OSError as exc:
        raise FileFormatError(f"{path}: {exc.strerror or exc}") from exc
    except ValueError as exc:
        raise FileFormatError(f"{path}: not a numeric CSV matrix ({exc})") from exc
    if a.size == 0:
        raise FileFormatError(f"{path}: empty matrix")
    return a


def read_vector(path) -> np.ndarray:
    """One real per line."""
    path = Path(path)
    try:
        v = np.loadtxt(path, ndmin=1, dtype=float)
    except OSError as exc:
        raise FileFormatError(f"{path}: {exc.strerror or exc}") from exc
    except ValueError as exc:
        raise FileFormatError(f"{path}: not a numeric vector file ({exc})") from exc
    if v.ndim != 1:
        raise FileFormatError(f"{path}: expected one value per line")
    return v


def write_matrix_csv(path, a) -> None:
    np.savetxt(path, np.atleast_2d(a), delimiter=",", fmt="%.17g")


def write_vector(path, v) -> None:
    np.savetxt(path, np.ravel(v), fmt="%.17g")
