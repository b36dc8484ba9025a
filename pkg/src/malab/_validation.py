"""Input validation helpers shared by the estimators."""

from __future__ import annotations

import numpy as np

from .exceptions import GridError, NotSPDError
from .grid import BoxGrid, PeriodicGrid, ScalarField


def check_box_field(field: ScalarField, grid: BoxGrid = None) -> ScalarField:
    if not isinstance(field, ScalarField):
        raise TypeError(f"expected ScalarField, got {type(field).__name__}")
    if not isinstance(field.grid, BoxGrid):
        raise GridError("field must live on a BoxGrid")
    if grid is not None and field.grid != grid:
        raise GridError("grid mismatch")
    return field


def check_periodic_field(field: ScalarField, grid: PeriodicGrid = None) -> ScalarField:
    if not isinstance(field, ScalarField):
        raise TypeError(f"expected ScalarField, got {type(field).__name__}")
    if not isinstance(field.grid, PeriodicGrid):
        raise GridError("field must live on a PeriodicGrid")
    if grid is not None and field.grid != grid:
        raise GridError("grid mismatch")
    return field


def check_same_grid(a: ScalarField, b: ScalarField) -> None:
    if a.grid != b.grid:
        raise GridError("grid mismatch")


def check_spd(A: np.ndarray, name: str = "matrix") -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"{name} must be square")
    if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise NotSPDError(f"{name} is not symmetric")
    if np.linalg.eigvalsh(A)[0] <= 0:
        raise NotSPDError(f"{name} is not SPD")
    return A


def check_points(X, dim: int = None) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("points must be a 2-D array (n_samples, n_features)")
    if dim is not None and X.shape[1] != dim:
        raise ValueError(f"expected {dim} coordinates, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise ValueError("points contain non-finite values")
    return X
