"""Small input-validation helpers shared by the public entry points."""
from __future__ import annotations

import numbers
from typing import Iterable

import numpy as np


class NotFittedError(RuntimeError):
    """Raised when an estimator is used before ``fit``."""


def check_phase_array(z, dim: int) -> np.ndarray:
    """Coerce ``z`` to a float array whose last axis has length ``2*dim``."""
    z = np.asarray(z, dtype=float)
    if z.ndim == 0 or z.shape[-1] != 2 * dim:
        raise ValueError(f"expected phase-space array with last axis {2 * dim}, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValueError("phase-space array has non-finite entries")
    return z


def check_positions(x, dim: int) -> np.ndarray:
    """Coerce ``x`` to an array of shape ``(n, dim)``."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    if x.ndim == 1:
        x = x.reshape(-1, dim) if dim > 1 else x.reshape(-1, 1)
    if x.shape[-1] != dim:
        raise ValueError(f"positions must have {dim} components, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("positions contain non-finite values")
    return x


def as_vector(x, dim: int, name: str = "x") -> np.ndarray:
    v = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
    if v.size != dim:
        raise ValueError(f"{name} must have {dim} components, got {v.size}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} has non-finite entries")
    return v


def check_finite_params(params: Iterable) -> tuple:
    params = tuple(float(p) for p in np.atleast_1d(np.asarray(list(params), dtype=float)))
    if not all(np.isfinite(params)):
        raise ValueError(f"non-finite model parameters: {params}")
    return params


def check_scalar(value, name: str, *, min_val=None, max_val=None, strict: bool = True) -> float:
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ValueError(f"{name} must be a finite real number, got {value!r}")
    value = float(value)
    if min_val is not None and (value <= min_val if strict else value < min_val):
        raise ValueError(f"{name} must be {'>' if strict else '>='} {min_val}, got {value}")
    if max_val is not None and value > max_val:
        raise ValueError(f"{name} must be <= {max_val}, got {value}")
    return value


def check_is_fitted(estimator, attribute: str) -> None:
    if not hasattr(estimator, attribute):
        raise NotFittedError(f"{type(estimator).__name__} is not fitted yet; call fit() first")
