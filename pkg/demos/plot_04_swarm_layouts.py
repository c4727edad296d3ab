"""
Moving several holes
====================

Start two- and four-hole layouts from coincident holes at the plate
center and let the swarm spread them to lower the mean temperature.
"""

from platelayout import builtin_case
from platelayout.pso import Objective, SwarmConfig, optimize

for case_id in (2, 3):
    objective = Objective(builtin_case(case_id))
    # Quantized velocities reproduce moves of 1, 5 or 10 pixels per step.
    result = optimize(objective, SwarmConfig(seed=0, iterations=20, quantize=True))
    print(f"case {case_id}: {result.initial_value:.5f} -> {result.best_value:.5f} "
          f"after {result.evaluations} distinct layouts")
    for hole in result.best_layout.holes:
        print(f"    hole at ({hole.cx}, {hole.cy}) size {hole.w} x {hole.h}")
