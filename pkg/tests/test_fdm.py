import numpy as np
import pytest

from platelayout.fdm import ConvergenceError, SolverConfig, direct_solve_small, solve_steady
from platelayout.field import (
    BoundaryCondition, GridSpec, HoleSpec, LayoutSpec, Mask, build_mask, mean_temperature, random_layout,
    builtin_case,
)
from platelayout.stencil import physics_residual

BC = BoundaryCondition()


def centered(w, h, grid=GridSpec()):
    cx, cy = grid.center
    return build_mask(LayoutSpec((HoleSpec(cx, cy, w, h),)), grid)


def random_small_instance(rng):
    nx, ny = int(rng.integers(8, 33)), int(rng.integers(8, 33))
    grid = GridSpec(nx, ny)
    holes = tuple(
        HoleSpec(int(rng.integers(1, nx - 1)), int(rng.integers(1, ny - 1)),
                 int(rng.integers(1, max(2, nx // 3))), int(rng.integers(1, max(2, ny // 3))))
        for _ in range(int(rng.integers(0, 4)))
    )
    return build_mask(LayoutSpec(holes), grid)


def test_zero_boundary_data_gives_zero_field():
    mask = centered(5, 7, GridSpec(20, 20))
    result = solve_steady(mask, BoundaryCondition(0.0, 0.0))
    assert np.all(result.field.values == 0.0)
    assert result.converged


def test_direct_zero_field_tiny_grid():
    grid = GridSpec(8, 8)
    out = direct_solve_small(Mask.ones(grid), BoundaryCondition(0.0, 0.0))
    assert np.all(out.values == 0.0)


def test_direct_solve_maximum_principle_and_decay():
    grid = GridSpec(8, 8)
    out = direct_solve_small(Mask.ones(grid), BC).values
    assert np.all((out[1:-1, 1] > 0) & (out[1:-1, 1] < 1))
    row = out[4, :]
    assert np.all(np.diff(row) < 0)


def test_sor_matches_direct_16x16():
    grid = GridSpec(16, 16)
    mask = Mask.ones(grid)
    ref = direct_solve_small(mask, BC)
    # The stopping rule bounds the per-sweep update, so ask for a tighter one
    # than the target accuracy.
    result = solve_steady(mask, BC, SolverConfig(tolerance=1e-10))
    assert np.abs(result.field.values - ref.values).max() <= 1e-8


def test_jacobi_matches_direct():
    grid = GridSpec(12, 10)
    mask = build_mask(LayoutSpec((HoleSpec(6, 5, 3, 2),)), grid)
    ref = direct_solve_small(mask, BC)
    result = solve_steady(mask, BC, SolverConfig(method="jacobi", tolerance=1e-12))
    assert np.abs(result.field.values - ref.values).max() <= 1e-8


def test_random_small_instances_agree():
    rng = np.random.default_rng(2024)
    for _ in range(20):
        mask = random_small_instance(rng)
        ref = direct_solve_small(mask, BC)
        result = solve_steady(mask, BC)
        assert np.abs(result.field.values - ref.values).max() <= 1e-7


def test_direct_size_limit():
    with pytest.raises(ValueError):
        direct_solve_small(Mask.ones(GridSpec(70, 70)), BC)


def test_nonconvergence_raises_with_residual():
    with pytest.raises(ConvergenceError) as info:
        solve_steady(Mask.ones(GridSpec(32, 32)), BC, SolverConfig(max_iterations=3))
    assert info.value.residual > 0
    assert info.value.iterations == 3


@pytest.mark.parametrize("kw", [{"omega": 2.0}, {"omega": 0.0}, {"tolerance": 0.0}, {"method": "cg"}])
def test_solver_config_validation(kw):
    with pytest.raises(ValueError):
        SolverConfig(**kw)


def test_maximum_principle_random_layouts():
    rng = np.random.default_rng(7)
    for _ in range(10):
        mask = random_small_instance(rng)
        values = solve_steady(mask, BC).field.values
        assert values.min() >= BC.cold_value - 1e-12
        assert values.max() <= BC.hot_value + 1e-12


def test_residual_certificate_matches_stencil_recomputation():
    mask = build_mask(random_layout(builtin_case(3), np.random.default_rng(1)), GridSpec())
    result = solve_steady(mask, BC)
    recomputed = physics_residual(result.field, mask).max_abs()
    assert abs(recomputed - result.residual) <= 1e-12
    assert result.residual <= 10 * SolverConfig().tolerance


def test_vertical_mirror_symmetry_small():
    grid = GridSpec(24, 20)
    mask = build_mask(LayoutSpec((HoleSpec(12, 10, 4, 6),)), grid)
    assert np.array_equal(mask.values, mask.values[::-1])
    values = solve_steady(mask, BC).field.values
    assert np.abs(values - values[::-1]).max() <= 1e-7


def test_tall_narrow_hole_cooler_than_square():
    square = centered(20, 20)
    tall = centered(5, 80)
    t_square = mean_temperature(solve_steady(square, BC).field, square)
    t_tall = mean_temperature(solve_steady(tall, BC).field, tall)
    assert t_tall < t_square
