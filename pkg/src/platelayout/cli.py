"""Command-line entry point: ``platelayout {solve,train,predict,optimize,compare}``.

Exit codes: 0 success, 2 configuration error, 3 solver failure,
4 training failure, 5 missing artifact, 6 grid/shape mismatch.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import fieldio
from .config import ConfigError, load_config, parse_holes
from .fdm import ConvergenceError, SolverConfig, solve_steady
from .field import (
    BoundaryCondition, GridMismatchError, GridSpec, HoleSpec, LayoutError, LayoutSpec, build_mask,
    builtin_case, height_for_width, mean_temperature,
)
from .nn.adam import TrainingError
from .nn.checkpoint import CheckpointError
from .nn.unet import UNetConfig
from .pso import Objective, SwarmConfig, optimize
from .report import compare
from .stencil import hole_adjacent, physics_residual
from .train import Surrogate, TrainingConfig, train

EXIT_CONFIG, EXIT_SOLVER, EXIT_TRAIN, EXIT_MISSING, EXIT_SHAPE = 2, 3, 4, 5, 6

log = logging.getLogger("platelayout")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _dump_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _metadata(start: float) -> dict:
    return {"timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"), "wall_time": time.perf_counter() - start}


class Context:
    """Typed views of a :class:`~platelayout.config.RunConfig`."""

    def __init__(self, cfg):
        self.cfg = cfg
        try:
            self.grid = GridSpec(cfg["grid.nx"], cfg["grid.ny"])
            self.bc = BoundaryCondition(cfg["bc.hot"], cfg["bc.cold"])
            self.case = builtin_case(cfg["layout.case"], self.grid)
            self.solver = SolverConfig(cfg["solver.method"], cfg["solver.omega"],
                                       cfg["solver.max_iterations"], cfg["solver.tolerance"])
        except ValueError as exc:
            raise CliError(str(exc), EXIT_CONFIG) from exc
        self.out_dir = Path(cfg["run.out_dir"])
        self.out_dir.mkdir(parents=True, exist_ok=True)

    def layout(self) -> LayoutSpec:
        cfg = self.cfg
        if cfg["layout.holes"]:
            try:
                return LayoutSpec(tuple(HoleSpec(*h) for h in parse_holes(cfg["layout.holes"])))
            except ValueError as exc:
                raise CliError(f"layout.holes: {exc}", EXIT_CONFIG) from exc
        if cfg["layout.width"] is not None:
            if self.case.side_range is None:
                raise CliError("layout.width only applies to case 1", EXIT_CONFIG)
            w = cfg["layout.width"]
            cx, cy = self.grid.center
            return LayoutSpec((HoleSpec(cx, cy, w, height_for_width(w, self.case.area)),))
        return self.case.initial_layout()

    def surrogate(self) -> Surrogate:
        path = self.cfg["run.checkpoint"]
        if not path or not Path(path).exists():
            raise CliError(f"checkpoint not found: {path}", EXIT_MISSING)
        try:
            sur = Surrogate.from_checkpoint(path)
        except (CheckpointError, ValueError) as exc:
            raise CliError(f"{path}: {exc}", EXIT_MISSING) from exc
        if sur.grid != self.grid:
            raise CliError(f"checkpoint grid {sur.grid.nx}x{sur.grid.ny} != configured "
                           f"{self.grid.nx}x{self.grid.ny}", EXIT_SHAPE)
        return sur

    def write_field(self, values: np.ndarray, stem: str = "field") -> None:
        fieldio.write_csv(self.out_dir / f"{stem}.csv", values)
        fieldio.write_pgm(self.out_dir / f"{stem}.pgm", values, self.bc.cold_value, self.bc.hot_value)

    def write_residual(self, field, mask) -> dict:
        res = physics_residual(field, mask)
        fieldio.write_csv(self.out_dir / "residual.csv", res.values)
        near = hole_adjacent(mask)
        return {
            "rms_residual": res.rms(),
            "max_abs_residual": res.max_abs(),
            "hole_adjacent_max_abs_residual": float(np.abs(res.values[near]).max()) if near.any() else 0.0,
        }


def cmd_solve(ctx: Context) -> None:
    start = time.perf_counter()
    layout = ctx.layout()
    mask = build_mask(layout, ctx.grid)
    try:
        result = solve_steady(mask, ctx.bc, ctx.solver)
    except ConvergenceError as exc:
        raise CliError(str(exc), EXIT_SOLVER) from exc
    ctx.write_field(result.field.values)
    stats = ctx.write_residual(result.field, mask)
    solver_stats = result.stats()
    payload = {
        "layout": layout.to_list(),
        "converged": solver_stats["converged"],
        "iterations": solver_stats["iterations"],
        "residual": solver_stats["residual"],
        "mean_temperature": mean_temperature(result.field, mask),
        **stats,
        "metadata": {**_metadata(start), "solver_seconds": solver_stats["seconds"]},
    }
    _dump_json(ctx.out_dir / "result.json", payload)


def _training_config(ctx: Context) -> TrainingConfig:
    cfg = ctx.cfg
    try:
        net = UNetConfig(depth=cfg["train.depth"], base_channels=cfg["train.base_channels"],
                         max_channels=cfg["train.max_channels"], normalization=cfg["train.normalization"],
                         decoder_activation=cfg["train.decoder_activation"], dropout=cfg["train.dropout"])
        if ctx.grid.nx % 2 ** net.depth or ctx.grid.ny % 2 ** net.depth:
            raise CliError(f"grid {ctx.grid.nx}x{ctx.grid.ny} not divisible by 2**{net.depth}", EXIT_SHAPE)
        return TrainingConfig(
            case=ctx.case, network=net, bc=ctx.bc, batch=cfg["train.batch"], epochs=cfg["train.epochs"],
            lr=cfg["train.lr"], seed=cfg["run.seed"], log_every=cfg["train.log_every"],
            checkpoint_every=cfg["train.checkpoint_every"],
            fixed_layout=ctx.layout() if cfg["train.fixed_layout"] else None,
        )
    except ValueError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from exc


def cmd_train(ctx: Context) -> None:
    start = time.perf_counter()
    tcfg = _training_config(ctx)
    ckpt = ctx.out_dir / "checkpoint.bin"
    try:
        _, history = train(tcfg, checkpoint_path=ckpt)
    except TrainingError as exc:
        raise CliError(str(exc), EXIT_TRAIN) from exc
    history.to_csv(ctx.out_dir / "history.csv")
    history.to_csv(ctx.out_dir / "history_timing.csv", timing=True)
    payload = {
        "epochs": tcfg.epochs,
        "seed": tcfg.seed,
        "first_loss": history.loss[0] if len(history) else None,
        "final_loss": history.loss[-1] if len(history) else None,
        "metadata": _metadata(start),
    }
    _dump_json(ctx.out_dir / "result.json", payload)


def cmd_predict(ctx: Context) -> None:
    start = time.perf_counter()
    sur = ctx.surrogate()
    layout = ctx.layout()
    mask = build_mask(layout, ctx.grid)
    try:
        field = sur.predict(layout)
    except GridMismatchError as exc:
        raise CliError(str(exc), EXIT_SHAPE) from exc
    ctx.write_field(field.values)
    stats = ctx.write_residual(field, mask)
    payload = {"layout": layout.to_list(), "mean_temperature": mean_temperature(field, mask), **stats,
               "metadata": _metadata(start)}
    _dump_json(ctx.out_dir / "result.json", payload)


def cmd_optimize(ctx: Context) -> None:
    cfg = ctx.cfg
    backend = cfg["run.backend"]
    if backend not in ("oracle", "surrogate"):
        raise CliError(f"unknown backend {backend!r}", EXIT_CONFIG)
    sur = ctx.surrogate() if backend == "surrogate" else None
    objective = Objective(ctx.case, backend, ctx.solver, surrogate=sur, bc=ctx.bc)
    try:
        swarm = SwarmConfig(cfg["swarm.particles"], cfg["swarm.inertia"], cfg["swarm.cognitive"],
                            cfg["swarm.social"], cfg["swarm.iterations"], cfg["run.seed"],
                            cfg["swarm.quantize"], cfg["run.threads"])
    except ValueError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from exc
    try:
        result = optimize(objective, swarm)
    except ConvergenceError as exc:
        raise CliError(str(exc), EXIT_SOLVER) from exc
    _dump_json(ctx.out_dir / "result.json", result.to_dict())
    ctx.write_field(objective.field(result.best_layout).values)


def cmd_compare(ctx: Context, a: str | None, b: str | None) -> None:
    start = time.perf_counter()
    layout = ctx.layout()
    if a or b:
        if not (a and b):
            raise CliError("compare needs both --a and --b", EXIT_CONFIG)
        for p in (a, b):
            if not Path(p).exists():
                raise CliError(f"field file not found: {p}", EXIT_MISSING)
        fa, fb = fieldio.read_field_csv(a), fieldio.read_field_csv(b)
        if fa.grid != fb.grid:
            raise CliError(f"fields differ in shape: {fa.grid} vs {fb.grid}", EXIT_SHAPE)
        mask = build_mask(layout, fa.grid) if fa.grid == ctx.grid and ctx.cfg["layout.holes"] else None
        labels = ("a", "b")
        meta = {"a": a, "b": b}
    else:
        sur = ctx.surrogate()
        mask = build_mask(layout, ctx.grid)
        fa = sur.predict(layout)
        try:
            fb = solve_steady(mask, ctx.bc, ctx.solver).field
        except ConvergenceError as exc:
            raise CliError(str(exc), EXIT_SOLVER) from exc
        labels = ("surrogate", "oracle")
        meta = {"layout": layout.to_list(), "checkpoint": ctx.cfg["run.checkpoint"]}
    try:
        report = compare(fa, fb, mask, metadata=meta)
    except (GridMismatchError, ValueError) as exc:
        raise CliError(str(exc), EXIT_SHAPE) from exc
    payload = report.to_dict()
    payload["metadata"]["run"] = _metadata(start)
    _dump_json(ctx.out_dir / "report.json", payload)
    (ctx.out_dir / "summary.txt").write_text(report.summary(*labels) + "\n")
    fieldio.write_csv(ctx.out_dir / "difference.csv", report.difference)
    span = max(float(np.abs(report.difference).max()), 1e-12)
    fieldio.write_pgm(ctx.out_dir / "difference.pgm", report.difference, -span, span)
    print(report.summary(*labels))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--seed", type=int)
    common.add_argument("--case", type=int, choices=(1, 2, 3))
    common.add_argument("--width", type=int, help="case-1 hole width in pixels")
    common.add_argument("--backend", choices=("oracle", "surrogate"))
    common.add_argument("--checkpoint")
    common.add_argument("--out-dir")
    common.add_argument("--epochs", type=int)
    common.add_argument("--threads", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="platelayout", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="finite-difference reference solve")
    sub.add_parser("train", parents=[common], help="physics-driven surrogate training")
    sub.add_parser("predict", parents=[common], help="surrogate inference for one layout")
    sub.add_parser("optimize", parents=[common], help="particle swarm layout optimization")
    cmp_ = sub.add_parser("compare", parents=[common], help="compare two fields, or surrogate vs oracle")
    cmp_.add_argument("--a", help="first field CSV")
    cmp_.add_argument("--b", help="second field CSV")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    overrides = {
        "run.seed": args.seed, "layout.case": args.case, "layout.width": args.width,
        "run.backend": args.backend, "run.checkpoint": args.checkpoint, "run.out_dir": args.out_dir,
        "train.epochs": args.epochs, "run.threads": args.threads,
    }
    try:
        ctx = Context(load_config(args.config, overrides))
        if args.command == "solve":
            cmd_solve(ctx)
        elif args.command == "train":
            cmd_train(ctx)
        elif args.command == "predict":
            cmd_predict(ctx)
        elif args.command == "optimize":
            cmd_optimize(ctx)
        else:
            cmd_compare(ctx, args.a, args.b)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except LayoutError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


if __name__ == "__main__":
    sys.exit(main())
