"""Data-free training of the surrogate against the Laplace residual."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .field import (
    BoundaryCondition, CaseSpec, GridMismatchError, LayoutSpec, Mask, TemperatureField,
    build_mask, builtin_case, dirichlet_values, initial_field, random_layout,
)
from .nn import tensor as T
from .nn import checkpoint
from .nn.adam import Adam, TrainingError
from .nn.tensor import Tensor
from .nn.unet import NetworkParams, UNetConfig, build_network, unet_forward

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainingConfig:
    case: CaseSpec = field(default_factory=lambda: builtin_case(1))
    network: UNetConfig = field(default_factory=UNetConfig)
    bc: BoundaryCondition = field(default_factory=BoundaryCondition)
    batch: int = 10
    epochs: int = 1000
    lr: float = 1e-3
    seed: int = 0
    log_every: int = 1
    checkpoint_every: int = 0
    fixed_layout: LayoutSpec | None = None

    def __post_init__(self):
        if self.batch < 1:
            raise ValueError("batch must be at least 1")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.log_every < 1:
            raise ValueError("log_every must be at least 1")

    @property
    def grid(self):
        return self.case.grid


@dataclass
class TrainingHistory:
    epochs: list[int] = field(default_factory=list)
    loss: list[float] = field(default_factory=list)
    rms_residual: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)

    def record(self, epoch: int, loss: float, seconds: float) -> None:
        if self.epochs and epoch <= self.epochs[-1]:
            raise ValueError("history epochs must increase")
        self.epochs.append(epoch)
        self.loss.append(loss)
        self.rms_residual.append(math.sqrt(loss))
        self.seconds.append(seconds)

    def __len__(self):
        return len(self.epochs)

    def loss_at(self, epoch: int) -> float:
        return self.loss[self.epochs.index(epoch)]

    def to_csv(self, path, timing: bool = False) -> None:
        """Write the history; wall time is opt-in so the file is reproducible by default."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "loss", "rms_residual"] + (["seconds"] if timing else []))
            for k in range(len(self)):
                row = [self.epochs[k], repr(self.loss[k]), repr(self.rms_residual[k])]
                if timing:
                    row.append(f"{self.seconds[k]:.6f}")
                w.writerow(row)


def _batch_arrays(masks: list[Mask], bc: BoundaryCondition):
    fixed, value = zip(*(dirichlet_values(m.grid, m, bc) for m in masks))
    return np.stack(fixed)[:, None], np.stack(value)[:, None]


def make_batch(case: CaseSpec, batch: int, rng: np.random.Generator, bc: BoundaryCondition | None = None,
               fixed_layout: LayoutSpec | None = None):
    """Return ``(inputs, masks)`` with inputs of shape ``(batch, 2, ny, nx)``.

    Channel 0 is the cold field carrying the Dirichlet data, channel 1 the mask.
    """
    bc = bc or BoundaryCondition()
    if fixed_layout is not None:
        layouts = [fixed_layout] * batch
    else:
        layouts = [random_layout(case, rng) for _ in range(batch)]
    masks = [build_mask(L, case.grid) for L in layouts]
    inputs = np.stack([np.stack([initial_field(m, bc).values, m.values]) for m in masks])
    return inputs, masks


def physics_loss_graph(net: NetworkParams, inputs: np.ndarray, masks: list[Mask], bc: BoundaryCondition,
                       training: bool, rng=None) -> Tensor:
    """Forward pass, hard Dirichlet overwrite, and batch-mean Laplace MSE as a graph."""
    fixed, value = _batch_arrays(masks, bc)
    out = unet_forward(Tensor(inputs), net, training, rng)
    temp = T.overwrite(out, fixed, value)
    residual = T.laplacian(temp)
    valid = ~fixed[:, :, 1:-1, 1:-1]
    return T.masked_mean_square(residual, valid)


def _metadata(config: TrainingConfig, epoch: int) -> dict:
    return {
        "grid": [config.grid.nx, config.grid.ny],
        "case_id": config.case.case_id,
        "hot_value": config.bc.hot_value,
        "cold_value": config.bc.cold_value,
        "seed": config.seed,
        "epoch": epoch,
    }


def train(config: TrainingConfig, checkpoint_path=None) -> tuple[NetworkParams, TrainingHistory]:
    """Train from scratch; returns the final network and the logged history.

    A non-finite loss or gradient raises :class:`TrainingError`; its
    ``params`` attribute holds the last network that produced a finite loss,
    and that network is also what sits in ``checkpoint_path``.
    """
    init_seq, layout_seq, drop_seq = np.random.SeedSequence(config.seed).spawn(3)
    net = build_network(config.network, np.random.default_rng(init_seq))
    layout_rng = np.random.default_rng(layout_seq)
    drop_rng = np.random.default_rng(drop_seq)
    opt = Adam(net.named_parameters(), lr=config.lr)
    history = TrainingHistory()
    last_good = net.copy()
    start = time.perf_counter()

    def save(params, epoch):
        if checkpoint_path is not None:
            checkpoint.save(checkpoint_path, params, _metadata(config, epoch), opt.state)

    for epoch in range(1, config.epochs + 1):
        inputs, masks = make_batch(config.case, config.batch, layout_rng, config.bc, config.fixed_layout)
        opt.zero_grad()
        loss = physics_loss_graph(net, inputs, masks, config.bc, True, drop_rng)
        value = float(loss.data)
        if not math.isfinite(value):
            save(last_good, epoch - 1)
            err = TrainingError(f"non-finite loss at epoch {epoch}")
            err.params = last_good
            raise err
        if epoch == 1 or epoch % config.log_every == 0 or epoch == config.epochs:
            elapsed = time.perf_counter() - start
            history.record(epoch, value, elapsed)
            log.info("epoch %d loss %.6e rms %.6e (%.1fs)", epoch, value, math.sqrt(value), elapsed)
        loss.backward()
        try:
            opt.step()
        except TrainingError as err:
            save(last_good, epoch - 1)
            err.params = last_good
            raise
        if config.checkpoint_every and epoch % config.checkpoint_every == 0:
            last_good = net.copy()
            save(net, epoch)
    save(net, config.epochs)
    return net, history


@dataclass
class Surrogate:
    """A trained network bound to the grid and boundary data it was trained on."""

    net: NetworkParams
    grid: object
    bc: BoundaryCondition = field(default_factory=BoundaryCondition)

    @classmethod
    def from_checkpoint(cls, path) -> "Surrogate":
        from .field import GridSpec

        net, meta, _ = checkpoint.load(path)
        grid = GridSpec(*meta.get("grid", (128, 128)))
        bc = BoundaryCondition(meta.get("hot_value", 1.0), meta.get("cold_value", 0.0))
        return cls(net, grid, bc)

    def predict(self, layout: LayoutSpec) -> TemperatureField:
        return predict(self.net, layout, self.grid, self.bc)


def predict(net: NetworkParams, layout: LayoutSpec, grid, bc: BoundaryCondition | None = None) -> TemperatureField:
    """Single inference pass followed by the Dirichlet overwrite."""
    bc = bc or BoundaryCondition()
    n = 2 ** net.config.depth
    if grid.nx % n or grid.ny % n:
        raise GridMismatchError(f"grid {grid.nx}x{grid.ny} incompatible with network depth {net.config.depth}")
    mask = build_mask(layout, grid)
    inputs = np.stack([initial_field(mask, bc).values, mask.values])[None]
    out = unet_forward(Tensor(inputs), net, training=False).data[0, 0]
    fixed, value = dirichlet_values(grid, mask, bc)
    return TemperatureField(grid, np.where(fixed, value, out))
