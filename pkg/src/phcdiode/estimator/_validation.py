from __future__ import annotations

import numpy as np
from sklearn.utils import check_array, column_or_1d


def as_1d(X, name="X"):
    """Accept a 1-D array or a single-column 2-D array."""
    arr = check_array(X, ensure_2d=False, dtype=np.float64, input_name=name)
    if arr.ndim == 2:
        if arr.shape[1] != 1:
            raise ValueError(f"{name} must have exactly one feature, got {arr.shape[1]}")
        arr = arr[:, 0]
    return arr


def check_curve(X, y, sigma=None, min_points=2):
    x = as_1d(X)
    y = column_or_1d(check_array(y, ensure_2d=False, dtype=np.float64, input_name="y"))
    if x.size != y.size:
        raise ValueError(f"X and y have different lengths ({x.size} != {y.size})")
    if x.size < min_points:
        raise ValueError(f"need at least {min_points} points, got {x.size}")
    if sigma is not None:
        sigma = column_or_1d(check_array(sigma, ensure_2d=False, dtype=np.float64, input_name="sigma"))
        if sigma.size != y.size:
            raise ValueError("sigma must match y in length")
        if np.any(sigma <= 0):
            raise ValueError("sigma must be > 0")
    return x, y, sigma
