"""Grid geometry, masks, boundary data and layout parameterizations.

Coordinates are 0-indexed pixels: ``x`` runs along array columns away from
the heated left edge, ``y`` runs along array rows downward.  Arrays are
indexed ``values[y, x]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class LayoutError(ValueError):
    """Raised for holes or layouts that cannot be rasterized."""


class GridMismatchError(ValueError):
    """Raised when two fields or masks live on different grids."""


class EmptyDomainError(ValueError):
    """Raised when a reduction has no cells to reduce over."""


def _frozen(values: np.ndarray, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class GridSpec:
    nx: int = 128
    ny: int = 128

    def __post_init__(self):
        if self.nx < 8 or self.ny < 8:
            raise ValueError(f"grid must be at least 8x8, got {self.nx}x{self.ny}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def center(self) -> tuple[int, int]:
        return (self.nx // 2, self.ny // 2)

    def interior(self) -> np.ndarray:
        """Boolean array that is True off the 1-pixel boundary ring."""
        inside = np.zeros(self.shape, dtype=bool)
        inside[1:-1, 1:-1] = True
        return inside


@dataclass(frozen=True)
class BoundaryCondition:
    hot_value: float = 1.0
    cold_value: float = 0.0

    def __post_init__(self):
        # Equal values are admitted so the degenerate all-cold problem can be posed.
        if self.hot_value < self.cold_value:
            raise ValueError("hot_value must not be below cold_value")


@dataclass(frozen=True, eq=False)
class TemperatureField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values)
        if values.shape != self.grid.shape:
            raise GridMismatchError(f"values shape {values.shape} != grid {self.grid.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("temperature field contains non-finite values")
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, grid: GridSpec, value: float = 0.0) -> "TemperatureField":
        return cls(grid, np.full(grid.shape, float(value)))


@dataclass(frozen=True, eq=False)
class Mask:
    """Occupancy field: 0 inside holes, 1 in conducting material."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values)
        if values.shape != self.grid.shape:
            raise GridMismatchError(f"values shape {values.shape} != grid {self.grid.shape}")
        if not np.all((values == 0.0) | (values == 1.0)):
            raise ValueError("mask values must be exactly 0 or 1")
        object.__setattr__(self, "values", values)

    @classmethod
    def ones(cls, grid: GridSpec) -> "Mask":
        return cls(grid, np.ones(grid.shape))

    @property
    def solid(self) -> np.ndarray:
        return self.values == 1.0

    @property
    def hole_area(self) -> int:
        return int(np.count_nonzero(self.values == 0.0))


@dataclass(frozen=True)
class HoleSpec:
    """Rectangular hole centered at column ``cx``, row ``cy``.

    ``w x h`` is the hole's array shape: ``w`` cells along y (rows) and
    ``h`` cells along x (columns).  A 5 x 80 hole is a horizontal slab that
    splits the plate into an upper and a lower part.
    """

    cx: int
    cy: int
    w: int
    h: int

    def rect(self, grid: GridSpec) -> tuple[int, int, int, int]:
        """Clamped half-open pixel rectangle ``(x0, x1, y0, y1)``.

        The rectangle keeps its size and is shifted so it stays off the
        boundary ring; sides longer than the interior are truncated.
        """
        if self.w < 1 or self.h < 1:
            raise LayoutError(f"hole sides must be positive, got {self.w}x{self.h}")
        x0, x1 = _clamp_span(self.cx, self.h, grid.nx)
        y0, y1 = _clamp_span(self.cy, self.w, grid.ny)
        return x0, x1, y0, y1

    def clamped(self, grid: GridSpec) -> "HoleSpec":
        """Equivalent hole whose nominal rectangle needs no clamping."""
        x0, x1, y0, y1 = self.rect(grid)
        h, w = x1 - x0, y1 - y0
        return HoleSpec(x0 + h // 2, y0 + w // 2, w, h)


def _clamp_span(center: int, size: int, n: int) -> tuple[int, int]:
    size = min(size, n - 2)
    lo = int(center) - size // 2
    lo = min(max(lo, 1), n - 1 - size)
    return lo, lo + size


@dataclass(frozen=True)
class LayoutSpec:
    holes: tuple[HoleSpec, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "holes", tuple(self.holes))

    def to_list(self) -> list[dict]:
        return [{"cx": h.cx, "cy": h.cy, "w": h.w, "h": h.h} for h in self.holes]

    @classmethod
    def from_list(cls, items: Sequence[dict]) -> "LayoutSpec":
        return cls(tuple(HoleSpec(int(d["cx"]), int(d["cy"]), int(d["w"]), int(d["h"])) for d in items))


@dataclass(frozen=True)
class CaseSpec:
    """A study case: hole count, fixed sides or area, and parameter bounds.

    ``side_range`` is set for the free-aspect single hole (width bounds,
    height derived from ``area``); ``offset_range`` bounds every center
    coordinate relative to the grid center for the movable-hole cases.
    """

    case_id: int
    n_holes: int
    grid: GridSpec = field(default_factory=GridSpec)
    area: int | None = None
    sides: tuple[int, int] | None = None
    side_range: tuple[int, int] | None = None
    offset_range: tuple[int, int] | None = None
    move_quanta: tuple[int, ...] = (1,)

    @property
    def center(self) -> tuple[int, int]:
        return self.grid.center

    @property
    def dim(self) -> int:
        return 1 if self.side_range is not None else 2 * self.n_holes

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if self.side_range is not None:
            lo, hi = self.side_range
        else:
            lo, hi = self.offset_range
        return np.full(self.dim, float(lo)), np.full(self.dim, float(hi))

    def initial_layout(self) -> LayoutSpec:
        """Pre-optimization layout: every hole on the grid center."""
        cx, cy = self.center
        if self.side_range is not None:
            side = math.isqrt(self.area)
            return LayoutSpec((HoleSpec(cx, cy, side, self.area // side),))
        w, h = self.sides
        return LayoutSpec(tuple(HoleSpec(cx, cy, w, h) for _ in range(self.n_holes)))


def height_for_width(width: int, area: int) -> int:
    """Integer height keeping ``width * height`` nearest ``area`` (half rounds up)."""
    return max(1, math.floor(area / width + 0.5))


def builtin_case(case_id: int, grid: GridSpec | None = None) -> CaseSpec:
    grid = grid or GridSpec()
    if case_id == 1:
        return CaseSpec(1, 1, grid, area=400, side_range=(5, 80), move_quanta=(1,))
    if case_id == 2:
        return CaseSpec(2, 2, grid, sides=(20, 10), offset_range=(-10, 10), move_quanta=(1, 5, 10))
    if case_id == 3:
        return CaseSpec(3, 4, grid, sides=(10, 10), offset_range=(-20, 20), move_quanta=(1, 5, 10))
    raise ValueError(f"unknown case id {case_id}; expected 1, 2 or 3")


def build_mask(layout: LayoutSpec, grid: GridSpec) -> Mask:
    values = np.ones(grid.shape)
    for hole in layout.holes:
        x0, x1, y0, y1 = hole.rect(grid)
        values[y0:y1, x0:x1] = 0.0
    return Mask(grid, values)


def dirichlet_values(grid: GridSpec, mask: Mask, bc: BoundaryCondition) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(fixed, value)``: which cells carry Dirichlet data and what it is."""
    fixed = ~grid.interior() | (mask.values == 0.0)
    value = np.full(grid.shape, float(bc.cold_value))
    value[:, 0] = bc.hot_value
    value[mask.values == 0.0] = bc.cold_value
    return fixed, value


def apply_dirichlet(field: TemperatureField, mask: Mask, bc: BoundaryCondition) -> TemperatureField:
    if field.grid != mask.grid:
        raise GridMismatchError(f"field grid {field.grid} != mask grid {mask.grid}")
    fixed, value = dirichlet_values(field.grid, mask, bc)
    return TemperatureField(field.grid, np.where(fixed, value, field.values))


def initial_field(mask: Mask, bc: BoundaryCondition) -> TemperatureField:
    """Cold field carrying the Dirichlet data; the network's first input channel."""
    return apply_dirichlet(TemperatureField.constant(mask.grid, bc.cold_value), mask, bc)


def mean_temperature(field: TemperatureField, mask: Mask) -> float:
    """Mean over conducting (mask 1) cells; hole cells are excluded."""
    if field.grid != mask.grid:
        raise GridMismatchError(f"field grid {field.grid} != mask grid {mask.grid}")
    solid = mask.solid
    if not solid.any():
        raise EmptyDomainError("mask has no conducting cells")
    return float(field.values[solid].mean())


def random_layout(case: CaseSpec, rng: np.random.Generator) -> LayoutSpec:
    cx, cy = case.center
    if case.side_range is not None:
        lo, hi = case.side_range
        w = int(rng.integers(lo, hi + 1))
        hole = HoleSpec(cx, cy, w, height_for_width(w, case.area))
        return LayoutSpec((hole.clamped(case.grid),))
    lo, hi = case.offset_range
    offsets = rng.integers(lo, hi + 1, size=(case.n_holes, 2))
    w, h = case.sides
    return LayoutSpec(tuple(
        HoleSpec(cx + int(dx), cy + int(dy), w, h).clamped(case.grid) for dx, dy in offsets
    ))
