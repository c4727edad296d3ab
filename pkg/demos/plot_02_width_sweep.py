"""
Case-1 width sweep
==================

Enumerate every admissible width of the single fixed-area hole and print
the mean temperature next to a text bar, then let the swarm find the
same optimum.
"""

from platelayout import builtin_case
from platelayout.pso import Objective, SwarmConfig, optimize, sweep_widths

case = builtin_case(1)
objective = Objective(case, backend="oracle")

# Exhaustive enumeration over widths 5..80; height is round(400 / width).
sweep = sweep_widths(objective)
lo, hi = min(sweep.values()), max(sweep.values())
for w in range(5, 81, 5):
    bar = "#" * int(1 + 40 * (sweep[w] - lo) / (hi - lo))
    print(f"w={w:2d} mean T={sweep[w]:.5f} {bar}")

# The swarm reuses cached evaluations, so this is cheap after the sweep.
result = optimize(objective, SwarmConfig(seed=0))
best = result.best_layout.holes[0]
print(f"swarm optimum: {best.w} x {best.h}, mean T {result.best_value:.5f}")
print(f"exhaustive optimum: width {min(sweep, key=sweep.get)}")
