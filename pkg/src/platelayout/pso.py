"""Particle swarm optimization of hole layouts.

The swarm moves in a continuous box; positions are rounded to whole pixels
only when decoded into a layout.  Case 1 is parameterized by the hole
width (height follows from the fixed area), the movable-hole cases by the
center offset of every hole from the grid center.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .fdm import SolverConfig, solve_steady
from .field import (
    BoundaryCondition, CaseSpec, HoleSpec, LayoutSpec, build_mask, height_for_width, mean_temperature,
)


def encode(layout: LayoutSpec, case: CaseSpec) -> np.ndarray:
    if len(layout.holes) != case.n_holes:
        raise ValueError(f"case {case.case_id} has {case.n_holes} holes, layout has {len(layout.holes)}")
    if case.side_range is not None:
        return np.array([float(layout.holes[0].w)])
    cx, cy = case.center
    return np.array([float(v) for h in layout.holes for v in (h.cx - cx, h.cy - cy)])


def decode(position, case: CaseSpec) -> LayoutSpec:
    position = np.asarray(position, dtype=np.float64)
    if position.shape != (case.dim,):
        raise ValueError(f"case {case.case_id} expects a {case.dim}-vector, got shape {position.shape}")
    lo, hi = case.bounds()
    q = np.clip(np.floor(position + 0.5), lo, hi).astype(int)
    cx, cy = case.center
    if case.side_range is not None:
        w = int(q[0])
        return LayoutSpec((HoleSpec(cx, cy, w, height_for_width(w, case.area)).clamped(case.grid),))
    w, h = case.sides
    return LayoutSpec(tuple(
        HoleSpec(cx + int(q[2 * k]), cy + int(q[2 * k + 1]), w, h).clamped(case.grid)
        for k in range(case.n_holes)
    ))


class Objective:
    """Mean temperature of a layout under an oracle or surrogate backend.

    Evaluations are memoized per decoded layout; both backends are
    deterministic, so the cache never changes a result.
    """

    def __init__(self, case: CaseSpec, backend: str = "oracle", solver: SolverConfig | None = None,
                 surrogate=None, bc: BoundaryCondition | None = None):
        if backend not in ("oracle", "surrogate"):
            raise ValueError(f"unknown backend {backend!r}")
        if backend == "surrogate":
            if surrogate is None:
                raise ValueError("surrogate backend needs a trained surrogate")
            if surrogate.grid != case.grid:
                raise ValueError(f"surrogate grid {surrogate.grid} != case grid {case.grid}")
            bc = bc or surrogate.bc
        self.case = case
        self.backend = backend
        self.solver = solver or SolverConfig()
        self.surrogate = surrogate
        self.bc = bc or BoundaryCondition()
        self.cache: dict[LayoutSpec, float] = {}

    def describe(self) -> dict:
        if self.backend == "oracle":
            return {"type": "oracle", "method": self.solver.method, "omega": self.solver.omega,
                    "tolerance": self.solver.tolerance}
        return {"type": "surrogate", "depth": self.surrogate.net.config.depth,
                "base_channels": self.surrogate.net.config.base_channels}

    def field(self, layout: LayoutSpec):
        if self.backend == "oracle":
            return solve_steady(build_mask(layout, self.case.grid), self.bc, self.solver).field
        return self.surrogate.predict(layout)

    def evaluate(self, layout: LayoutSpec) -> float:
        if layout not in self.cache:
            mask = build_mask(layout, self.case.grid)
            self.cache[layout] = mean_temperature(self.field(layout), mask)
        return self.cache[layout]

    def __call__(self, position) -> float:
        return self.evaluate(decode(position, self.case))


@dataclass(frozen=True)
class SwarmConfig:
    particles: int = 10
    inertia: float = 0.729
    cognitive: float = 1.49445
    social: float = 1.49445
    iterations: int = 30
    seed: int = 0
    quantize: bool = False
    threads: int = 1

    def __post_init__(self):
        if not 0.0 < self.inertia < 1.0:
            raise ValueError("inertia must lie in (0, 1)")
        if self.cognitive <= 0 or self.social <= 0:
            raise ValueError("acceleration coefficients must be positive")
        if self.particles < 1:
            raise ValueError("need at least one particle")


@dataclass
class Particle:
    position: np.ndarray
    velocity: np.ndarray
    best_position: np.ndarray
    best_value: float


@dataclass
class Swarm:
    particles: list[Particle]
    lower: np.ndarray
    upper: np.ndarray
    best_position: np.ndarray
    best_value: float
    iteration: int = 0
    quanta: tuple[int, ...] = ()

    @property
    def velocity_cap(self) -> np.ndarray:
        return 0.5 * (self.upper - self.lower)


def _evaluate_all(fitness, positions, threads: int) -> list[float]:
    if threads > 1 and len(positions) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fitness, positions))
    return [fitness(p) for p in positions]


def _global_best(particles):
    # first strict minimum in index order, independent of evaluation scheduling
    k = min(range(len(particles)), key=lambda i: (particles[i].best_value, i))
    return particles[k].best_position.copy(), particles[k].best_value


def init_swarm(fitness, lower, upper, cfg: SwarmConfig, rng: np.random.Generator,
               seeds: list[np.ndarray] | None = None, quanta: tuple[int, ...] = ()) -> Swarm:
    """Start at rest: ``seeds`` first, the remaining particles uniform in the box."""
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    seeds = [np.clip(np.asarray(s, dtype=np.float64), lower, upper) for s in (seeds or [])][:cfg.particles]
    rest = [rng.uniform(lower, upper) for _ in range(cfg.particles - len(seeds))]
    positions = seeds + rest
    values = _evaluate_all(fitness, positions, cfg.threads)
    particles = [Particle(x, np.zeros_like(x), x.copy(), float(f)) for x, f in zip(positions, values)]
    best_x, best_f = _global_best(particles)
    return Swarm(particles, lower, upper, best_x, best_f, 0, quanta)


def _quantize(v: np.ndarray, quanta: tuple[int, ...]) -> np.ndarray:
    moves = np.array(sorted({0.0} | {float(s * q) for q in quanta for s in (-1, 1)}))
    idx = np.abs(v[..., None] - moves).argmin(axis=-1)
    return moves[idx]


def step(swarm: Swarm, fitness, cfg: SwarmConfig, rng: np.random.Generator) -> Swarm:
    """One synchronous swarm update; returns a new :class:`Swarm`."""
    cap = swarm.velocity_cap
    moved = []
    for p in swarm.particles:
        r1 = rng.random(p.position.shape)
        r2 = rng.random(p.position.shape)
        v = (cfg.inertia * p.velocity
             + cfg.cognitive * r1 * (p.best_position - p.position)
             + cfg.social * r2 * (swarm.best_position - p.position))
        v = np.clip(v, -cap, cap)
        if cfg.quantize and swarm.quanta:
            v = _quantize(v, swarm.quanta)
        x = np.clip(p.position + v, swarm.lower, swarm.upper)
        moved.append((x, v))
    values = _evaluate_all(fitness, [x for x, _ in moved], cfg.threads)
    particles = []
    for p, (x, v), f in zip(swarm.particles, moved, values):
        if f < p.best_value:
            particles.append(Particle(x, v, x.copy(), float(f)))
        else:
            particles.append(Particle(x, v, p.best_position, p.best_value))
    best_x, best_f = _global_best(particles)
    if not best_f < swarm.best_value:
        best_x, best_f = swarm.best_position, swarm.best_value
    return replace(swarm, particles=particles, best_position=best_x, best_value=best_f,
                   iteration=swarm.iteration + 1)


def minimize(fitness, lower, upper, cfg: SwarmConfig, seeds=None, quanta=()):
    """Run ``cfg.iterations`` steps; returns ``(swarm, trace)`` with the gbest value per iteration."""
    rng = np.random.default_rng(cfg.seed)
    swarm = init_swarm(fitness, lower, upper, cfg, rng, seeds, quanta)
    trace = [swarm.best_value]
    for _ in range(cfg.iterations):
        swarm = step(swarm, fitness, cfg, rng)
        trace.append(swarm.best_value)
    return swarm, trace


@dataclass
class OptimizationResult:
    case_id: int
    backend: dict
    best_layout: LayoutSpec
    best_value: float
    trace: list[float]
    seed: int
    initial_value: float
    evaluations: int
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "backend": self.backend,
            "best_layout": self.best_layout.to_list(),
            "best_value": self.best_value,
            "initial_value": self.initial_value,
            "trace": self.trace,
            "seed": self.seed,
            "evaluations": self.evaluations,
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def optimize(objective: Objective, cfg: SwarmConfig | None = None) -> OptimizationResult:
    """Minimize the objective's mean temperature over the case's layout box.

    One particle starts on the case's initial (centered, coincident) layout,
    so the trace starts at or below the un-optimized value.
    """
    cfg = cfg or SwarmConfig()
    case = objective.case
    start = time.perf_counter()
    initial = case.initial_layout()
    lower, upper = case.bounds()
    swarm, trace = minimize(objective, lower, upper, cfg, seeds=[encode(initial, case)],
                            quanta=case.move_quanta)
    return OptimizationResult(
        case_id=case.case_id,
        backend=objective.describe(),
        best_layout=decode(swarm.best_position, case),
        best_value=swarm.best_value,
        trace=trace,
        seed=cfg.seed,
        initial_value=objective.evaluate(initial),
        evaluations=len(objective.cache),
        metadata={"wall_time": time.perf_counter() - start,
                  "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S")},
    )


def sweep_widths(objective: Objective) -> dict[int, float]:
    """Exhaustive case-1 enumeration: mean temperature for every admissible width."""
    case = objective.case
    if case.side_range is None:
        raise ValueError("width sweep only applies to the free-aspect single-hole case")
    lo, hi = case.side_range
    return {w: objective(np.array([float(w)])) for w in range(lo, hi + 1)}
