"""
A computable upper bound on the open-loop error
===============================================

The bound is the sum of a transported initial mismatch, an accumulated
Hamiltonian approximation error, and a term proportional to T^2 / N that
does not depend on the integrator.
"""

from qcdol import convergence_sweep, default_setup
from qcdol.analysis import bound_coefficient, protocol_constants
from qcdol.pipeline import reference_trajectory

setup = default_setup()
grids = (64, 256, 1024)
ref = reference_trajectory(setup.sys, setup.rho0, setup.T, 64 * max(grids))

l0, l1 = protocol_constants(setup.sys, ref)
print(f"L0 = {l0}, L1 = {l1}")
print(f"coefficient of T^2/N: {bound_coefficient(setup.sys, l0, l1):.4f}")

records = convergence_sweep(setup.sys, setup.rho0, setup.sigma0, setup.T, (1, 3, 5), grids, ref=ref)
print(f"\n{'order':>5} {'N':>6} {'||e_N||':>11} {'bound':>11} {'init':>10} {'E term':>10} {'T2/N':>10}")
for r in records:
    print(
        f"{r.method_order:5d} {r.n_grid:6d} {r.norm_e:11.4e} {r.bound:11.4e} "
        f"{r.term_init:10.3e} {r.term_e:10.3e} {r.term_t2_over_n:10.3e}"
    )
