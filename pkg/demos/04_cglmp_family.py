"""
CGLMP over the two-photon family
================================

States ``C00|00> + C11|11> + C22|22>`` with real coefficients. The CGLMP
maximum is found on a coarse grid; points with ``C11 < 0`` follow from
those with ``C11 > 0`` by flipping the sign of Bob's settings.
"""

import numpy as np

from photonbell.optimize import OptimizerConfig, cglmp_grid

cfg = OptimizerConfig(population=16, de_generations=30, nm_max_iters=1000, nm_top=2, sa_restarts=1)
grid = [round(v, 10) for v in np.linspace(-1, 1, 6)]
res = cglmp_grid(grid, grid, cfg, refine=2)

# %%
print("C00 \\ C11 " + " ".join(f"{c:+6.2f}" for c in grid))
for a in grid:
    cells = [("   --- " if res[a, b] is None else f"{res[a, b].value:6.3f}") for b in grid]
    print(f"{a:+9.2f}  " + " ".join(cells))

best = max((r.value, k) for k, r in res.items() if r is not None)
print("maximum on this grid:", best)
