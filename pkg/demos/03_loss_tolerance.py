"""
How much loss can a violation survive?
======================================

For each loss the settings are re-optimised; bisection finds the largest
loss at which the optimised value still exceeds 2. Nearly product states
tolerate the most loss (the Eberhard limit of one third).
"""

from photonbell.fock import TmsvParams, eps_family_state
from photonbell.optimize import OptimizerConfig, loss_tolerance

cfg = OptimizerConfig(population=24, de_generations=60, nm_max_iters=2000, nm_top=2, sa_restarts=1)

# %%
for label, state in [("eps = 0.5", eps_family_state(0.5)), ("eps = 0.001", eps_family_state(1e-3)),
                     ("TMSV g = 0.05", TmsvParams(0.05))]:
    r = loss_tolerance(state, "zero_nonzero", "detector", cfg, width=4e-3)
    print(f"{label:14s} loss tolerance {r.max_loss:.3f}  (B = {r.bell_at_threshold:.4f} at threshold)")

# %%
# Loss at the source gives the same threshold as loss at the detectors:
# the channels differ only by the rescaling delta -> sqrt(eta) delta,
# which the optimiser absorbs.
for placement in ("detector", "source"):
    r = loss_tolerance(TmsvParams(0.05), "zero_nonzero", placement, cfg, width=4e-3)
    print(f"TMSV g = 0.05, {placement:8s} loss: {r.max_loss:.3f}")
