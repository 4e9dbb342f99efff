"""Input checks shared by the estimators and functional entry points."""

from __future__ import annotations

import numbers

import numpy as np


def check_elevation(dem, name: str = "dem") -> np.ndarray:
    dem = np.asarray(dem)
    if dem.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {dem.shape}")
    if dem.dtype != np.float32:
        dem = dem.astype(np.float32)
    return dem


def check_mask(mask, shape: tuple[int, int] | None = None, name: str = "mask") -> np.ndarray:
    if mask is None:
        if shape is None:
            raise ValueError(f"{name} is required")
        return np.zeros(shape, dtype=bool)
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {mask.shape}")
    if mask.dtype != np.bool_:
        if not np.isin(mask, (0, 1)).all():
            raise ValueError(f"{name} must be boolean-valued")
        mask = mask.astype(bool)
    if shape is not None and mask.shape != tuple(shape):
        raise ValueError(f"{name} shape {mask.shape} does not match {tuple(shape)}")
    return mask


def check_odd_kernel(kernel, minimum: int = 3) -> int:
    if not isinstance(kernel, numbers.Integral) or kernel < minimum or kernel % 2 == 0:
        raise ValueError(f"kernel must be an odd integer >= {minimum}, got {kernel!r}")
    return int(kernel)


def check_fraction(value, name: str, *, open_low: bool = False) -> float:
    value = float(value)
    low_ok = value > 0 if open_low else value >= 0
    if not (low_ok and value <= 1):
        raise ValueError(f"{name} must lie in {'(0' if open_low else '[0'}, 1], got {value}")
    return value
