"""Finite-difference stencils and the Laplace residual losses.

The 3x3 kernels are applied as cross-correlations without padding.  As
written, each kernel differences along array axis 0 (rows); its transpose
differences along axis 1 (columns).  Their sum gives the 5-point Laplacian
on a unit-spaced grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import EmptyDomainError, GridMismatchError, GridSpec, Mask, TemperatureField

FIRST_DERIVATIVE_KERNEL = np.array([
    [0.0, -0.5, 0.0],
    [0.0, 0.0, 0.0],
    [0.0, 0.5, 0.0],
])
SECOND_DERIVATIVE_KERNEL = np.array([
    [0.0, 1.0, 0.0],
    [0.0, -2.0, 0.0],
    [0.0, 1.0, 0.0],
])
for _k in (FIRST_DERIVATIVE_KERNEL, SECOND_DERIVATIVE_KERNEL):
    _k.setflags(write=False)


def correlate3x3(values: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Valid-mode cross-correlation over the trailing two axes.

    Input ``(..., H, W)`` gives output ``(..., H-2, W-2)``; zero kernel taps
    are skipped, so the result is exact wherever the arithmetic is exact.
    """
    h, w = values.shape[-2:]
    out = np.zeros(values.shape[:-2] + (h - 2, w - 2))
    for di in range(3):
        for dj in range(3):
            k = kernel[di, dj]
            if k != 0.0:
                out += k * values[..., di:di + h - 2, dj:dj + w - 2]
    return out


def correlate3x3_adjoint(grad: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`correlate3x3`: scatter ``(..., H-2, W-2)`` back to ``(..., H, W)``."""
    hh, ww = grad.shape[-2:]
    out = np.zeros(grad.shape[:-2] + (hh + 2, ww + 2))
    for di in range(3):
        for dj in range(3):
            k = kernel[di, dj]
            if k != 0.0:
                out[..., di:di + hh, dj:dj + ww] += k * grad
    return out


def laplacian_interior(values: np.ndarray) -> np.ndarray:
    """5-point Laplacian of the interior cells of ``values[..., H, W]``."""
    return (correlate3x3(values, SECOND_DERIVATIVE_KERNEL)
            + correlate3x3(values, SECOND_DERIVATIVE_KERNEL.T))


def derivative(values: np.ndarray, axis: int) -> np.ndarray:
    """Central first difference along ``axis`` (0 = rows/y, 1 = columns/x), interior only."""
    kernel = FIRST_DERIVATIVE_KERNEL if axis == 0 else FIRST_DERIVATIVE_KERNEL.T
    return correlate3x3(np.asarray(values, dtype=np.float64), kernel)


@dataclass(frozen=True, eq=False)
class ResidualField:
    grid: GridSpec
    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        valid = np.array(self.valid, dtype=bool)
        values = np.where(valid, np.asarray(self.values, dtype=np.float64), 0.0)
        if values.shape != self.grid.shape:
            raise GridMismatchError(f"residual shape {values.shape} != grid {self.grid.shape}")
        values.setflags(write=False)
        valid.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "valid", valid)

    def max_abs(self) -> float:
        return float(np.abs(self.values).max()) if self.valid.any() else 0.0

    def rms(self) -> float:
        return float(np.sqrt(physics_loss(self)))


def laplacian(field: TemperatureField) -> ResidualField:
    grid = field.grid
    values = np.zeros(grid.shape)
    values[1:-1, 1:-1] = laplacian_interior(field.values)
    return ResidualField(grid, values, grid.interior())


def physics_residual(field: TemperatureField, mask: Mask) -> ResidualField:
    """Laplacian restricted to interior conducting cells.

    Cells next to a hole stay valid (their stencil reads the hole's
    Dirichlet value); the hole cells themselves are excluded.
    """
    if field.grid != mask.grid:
        raise GridMismatchError(f"field grid {field.grid} != mask grid {mask.grid}")
    lap = laplacian(field)
    return ResidualField(field.grid, lap.values, lap.valid & mask.solid)


def hole_adjacent(mask: Mask) -> np.ndarray:
    """Interior conducting cells with at least one hole among their 4 neighbours."""
    hole = ~mask.solid
    near = np.zeros_like(hole)
    near[1:, :] |= hole[:-1, :]
    near[:-1, :] |= hole[1:, :]
    near[:, 1:] |= hole[:, :-1]
    near[:, :-1] |= hole[:, 1:]
    return near & mask.solid & mask.grid.interior()


def physics_loss(residual: ResidualField) -> float:
    """Mean squared residual over valid cells."""
    n = int(np.count_nonzero(residual.valid))
    if n == 0:
        raise EmptyDomainError("residual has no valid cells")
    return float(np.sum(residual.values[residual.valid] ** 2) / n)


def data_loss(pred: TemperatureField, truth: TemperatureField) -> float:
    """Mean absolute difference over all cells (a validation metric only)."""
    if pred.grid != truth.grid:
        raise GridMismatchError(f"grid {pred.grid} != {truth.grid}")
    return float(np.mean(np.abs(pred.values - truth.values)))
