"""
Error decay under grid refinement
=================================

Sweep Runge-Kutta orders 1 to 5 over a ladder of grids and look at the part
of the final error that is not explained by the initial mismatch. Its decay
is first order whatever the integrator.
"""

import numpy as np

from qcdol import convergence_sweep, default_setup, slope_fit, theorem2_limit
from qcdol.analysis import records_for
from qcdol.pipeline import reference_trajectory

setup = default_setup()
grids = (64, 128, 256, 512, 1024)

# the reference is a finely resolved closed-loop run; 64 substeps per coarse step
ref = reference_trajectory(setup.sys, setup.rho0, setup.T, 64 * max(grids))
records = convergence_sweep(setup.sys, setup.rho0, setup.sigma0, setup.T, range(1, 6), grids, ref=ref)

print("order" + "".join(f"{n:>12d}" for n in grids) + "      slope")
for order in range(1, 6):
    rs = records_for(records, order)
    row = "".join(f"{r.norm_f:12.3e}" for r in rs)
    print(f"RK{order}  {row}   {slope_fit(rs, 'norm_f'):8.3f}")

# N F(N, T) tends to a limit that depends only on the closed loop
limit = theorem2_limit(ref, setup.sigma0, setup.sys, setup.T)
print(f"\n||L|| = {limit.norm:.6f}")
for r in records_for(records, 4):
    dev = np.linalg.norm(r.n_grid / setup.T * r.f_matrix - limit.limit_matrix) / limit.norm
    print(f"N = {r.n_grid:5d}   relative distance of N F to L: {dev:.2e}")
