"""
Training a surrogate without data
=================================

Train a small U-net on the Laplace residual alone for one layout, then
compare its prediction with the finite-difference reference using the
four sampling squares.  Pass an epoch count as the first argument for a
longer run.
"""

import sys

from platelayout import BoundaryCondition, GridSpec, HoleSpec, LayoutSpec, build_mask, builtin_case
from platelayout.fdm import solve_steady
from platelayout.nn import UNetConfig
from platelayout.report import compare
from platelayout.train import TrainingConfig, predict, train

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 2000
grid = GridSpec(64, 64)
layout = LayoutSpec((HoleSpec(32, 32, 10, 10),))

# No temperature data enters training: only the residual of the stencil.
config = TrainingConfig(
    case=builtin_case(1, grid),
    network=UNetConfig(depth=6, base_channels=8, normalization=False, decoder_activation="leaky"),
    batch=1, epochs=epochs, lr=1e-3, seed=0, log_every=max(epochs // 10, 1), fixed_layout=layout,
)
net, history = train(config)
for epoch, loss in zip(history.epochs, history.loss):
    print(f"epoch {epoch:6d}  physics loss {loss:.3e}")

# Compare against the reference solve on the same layout.
bc = BoundaryCondition()
mask = build_mask(layout, grid)
report = compare(predict(net, layout, grid, bc), solve_steady(mask, bc).field, mask)
print(report.summary("surrogate", "reference"))
