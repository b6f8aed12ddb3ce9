"""Input checks shared by the estimator classes and the CLI."""

from __future__ import annotations

import numpy as np


def check_los(x, name: str = "X") -> np.ndarray:
    """Leg displacements as a finite ``(n, 6)`` float array (a single row is promoted)."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 6:
        raise ValueError(f"{name} must have shape (n, 6), got {np.shape(x)}")
    if arr.shape[0] == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or infinite values")
    return arr


def check_poses(y, name: str = "y", atol: float = 1e-6) -> np.ndarray:
    """Homogeneous poses as ``(n, 4, 4)``; accepts ``(n, 16)`` rows or a single ``(4, 4)``."""
    arr = np.asarray(y, dtype=float)
    if arr.shape == (4, 4):
        arr = arr[None]
    elif arr.ndim == 2 and arr.shape[1] == 16:
        arr = arr.reshape(-1, 4, 4)
    if arr.ndim != 3 or arr.shape[1:] != (4, 4):
        raise ValueError(f"{name} must have shape (n, 4, 4) or (n, 16), got {np.shape(y)}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or infinite values")
    r = arr[:, :3, :3]
    ortho = np.abs(r @ np.swapaxes(r, 1, 2) - np.eye(3)).max(initial=0.0)
    if ortho > atol or np.any(np.linalg.det(r) <= 0):
        raise ValueError(f"{name} rotation blocks are not proper rotations (tolerance {atol})")
    if np.abs(arr[:, 3] - [0.0, 0.0, 0.0, 1.0]).max(initial=0.0) > atol:
        raise ValueError(f"{name} bottom rows must be [0, 0, 0, 1]")
    return arr


def check_consistent_length(*arrays) -> None:
    lengths = {a.shape[0] for a in arrays}
    if len(lengths) > 1:
        raise ValueError(f"inputs have inconsistent numbers of samples: {sorted(lengths)}")


def check_positive(value, name: str) -> float:
    value = float(value)
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value}")
    return value
