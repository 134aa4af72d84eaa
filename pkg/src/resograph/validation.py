"""Input validation helpers for the array-facing estimator API."""

from __future__ import annotations

import numpy as np

from .exceptions import ShapeError


def check_series_array(x, name: str = "X") -> np.ndarray:
    """Validate a [N, T, C] batch of series; returns a float64 array."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeError(
            f"{name} must be [n_samples, n_timesteps, n_channels], got shape {x.shape}"
        )
    if x.shape[0] == 0:
        raise ShapeError(f"{name} has zero samples")
    if not np.isfinite(x).all():
        raise ValueError(f"{name} contains non-finite values")
    return np.ascontiguousarray(x)


def check_labels(y, n_samples: int, name: str = "y") -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1:
        raise ShapeError(f"{name} must be 1-d, got shape {y.shape}")
    if len(y) != n_samples:
        raise ShapeError(f"{name} has {len(y)} entries for {n_samples} samples")
    return y


def check_groups(groups, n_samples: int):
    if groups is None:
        return None
    groups = np.asarray(groups)
    if groups.ndim != 1 or len(groups) != n_samples:
        raise ShapeError(
            f"groups must be 1-d with {n_samples} entries, got shape {groups.shape}"
        )
    return [str(g) for g in groups]
