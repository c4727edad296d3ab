"""Surrogate-versus-reference comparison: sampling squares and field metrics."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .field import GridMismatchError, GridSpec, Mask, TemperatureField, mean_temperature

SQUARE_PLACEMENT = "centers 20 px from the two nearest edges; #1,#4 on the heated side"


@dataclass(frozen=True)
class SamplingSquare:
    cx: int
    cy: int
    side: int = 5

    def slices(self, grid: GridSpec) -> tuple[slice, slice]:
        half = self.side // 2
        y0, x0 = self.cy - half, self.cx - half
        if x0 < 0 or y0 < 0 or x0 + self.side > grid.nx or y0 + self.side > grid.ny:
            raise ValueError(f"square at ({self.cx}, {self.cy}) side {self.side} leaves the grid")
        return slice(y0, y0 + self.side), slice(x0, x0 + self.side)


def default_squares(grid: GridSpec, offset: int = 20, side: int = 5) -> list[SamplingSquare]:
    """Four 5x5 squares, numbered clockwise from the heated top corner."""
    if grid.nx < 2 * offset + 1 or grid.ny < 2 * offset + 1:
        raise ValueError(f"grid {grid.nx}x{grid.ny} too small for squares {offset} px from the edges")
    far_x, far_y = grid.nx - 1 - offset, grid.ny - 1 - offset
    return [
        SamplingSquare(offset, offset, side),
        SamplingSquare(far_x, offset, side),
        SamplingSquare(far_x, far_y, side),
        SamplingSquare(offset, far_y, side),
    ]


def sampling_square_means(field: TemperatureField, squares) -> np.ndarray:
    # fsum is exactly rounded, so a mean does not depend on cell order
    means = []
    for sq in squares:
        cells = field.values[sq.slices(field.grid)]
        means.append(math.fsum(cells.ravel()) / cells.size)
    return np.array(means)


@dataclass
class ComparisonReport:
    squares: list[SamplingSquare]
    square_means_a: np.ndarray
    square_means_b: np.ndarray
    mae: float
    max_abs: float
    mean_temperature_a: float
    mean_temperature_b: float
    difference: np.ndarray = field(repr=False)
    metadata: dict = field(default_factory=dict)

    @property
    def square_abs_diff(self) -> np.ndarray:
        return np.abs(self.square_means_a - self.square_means_b)

    def to_dict(self) -> dict:
        return {
            "squares": [{"cx": s.cx, "cy": s.cy, "side": s.side} for s in self.squares],
            "square_means_a": self.square_means_a.tolist(),
            "square_means_b": self.square_means_b.tolist(),
            "square_abs_diff": self.square_abs_diff.tolist(),
            "mae": self.mae,
            "max_abs": self.max_abs,
            "mean_temperature_a": self.mean_temperature_a,
            "mean_temperature_b": self.mean_temperature_b,
            "metadata": {"square_placement": SQUARE_PLACEMENT, **self.metadata},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def summary(self, label_a: str = "a", label_b: str = "b") -> str:
        lines = [f"{'square':>6} {label_a:>12} {label_b:>12} {'|diff|':>12}"]
        for k, (ma, mb, d) in enumerate(zip(self.square_means_a, self.square_means_b, self.square_abs_diff), 1):
            lines.append(f"{k:>6} {ma:12.6f} {mb:12.6f} {d:12.3e}")
        lines.append(f"MAE {self.mae:.3e}   max |diff| {self.max_abs:.3e}")
        lines.append(f"mean T  {label_a} {self.mean_temperature_a:.6f}   {label_b} {self.mean_temperature_b:.6f}")
        return "\n".join(lines)


def compare(field_a: TemperatureField, field_b: TemperatureField, mask: Mask | None = None,
            squares=None, metadata: dict | None = None) -> ComparisonReport:
    """Compare two fields; MAE and max difference are taken over conducting cells."""
    if field_a.grid != field_b.grid:
        raise GridMismatchError(f"grid {field_a.grid} != {field_b.grid}")
    grid = field_a.grid
    mask = mask or Mask.ones(grid)
    if mask.grid != grid:
        raise GridMismatchError(f"mask grid {mask.grid} != field grid {grid}")
    squares = squares if squares is not None else default_squares(grid)
    diff = field_a.values - field_b.values
    solid = mask.solid
    return ComparisonReport(
        squares=list(squares),
        square_means_a=sampling_square_means(field_a, squares),
        square_means_b=sampling_square_means(field_b, squares),
        mae=float(np.abs(diff[solid]).mean()),
        max_abs=float(np.abs(diff[solid]).max()),
        mean_temperature_a=mean_temperature(field_a, mask),
        mean_temperature_b=mean_temperature(field_b, mask),
        difference=diff,
        metadata=dict(metadata or {}),
    )
