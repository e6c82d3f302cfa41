"""
Running the pipeline on a user-defined system
=============================================

Any drift, control Hamiltonians and affine protocols u_k = tr(M_k rho) + c_k
can be plugged in. Here a single qubit is steered towards |0> by a
Lyapunov-type feedback, and the same sweep machinery applies.
"""

import numpy as np

from qcdol import AffineProtocol, BilinearSystem, convergence_sweep, slope_fit

sx = np.array([[0, 1], [1, 0]], dtype=complex)
sy = np.array([[0, -1j], [1j, 0]])
sz = np.diag([1.0, -1.0]).astype(complex)

# u = -K tr(i[rho_d, sx] rho) makes d/dt (1 - <0|rho|0>) = -u^2 / K
target = np.diag([1.0, 0.0]).astype(complex)
K = 2.0
m = -K * 1j * (target @ sx - sx @ target)
sys = BilinearSystem(0.5 * sz, [sx], [AffineProtocol(m)])

psi = np.array([np.cos(1.0), np.sin(1.0)], dtype=complex)
rho0 = np.outer(psi, psi.conj())
sigma0 = 0.98 * rho0 + 0.02 * np.eye(2) / 2

records = convergence_sweep(sys, rho0, sigma0, 2.0, (2, 4), (32, 64, 128, 256))
for order in (2, 4):
    rs = [r for r in records if r.method_order == order]
    print(f"RK{order}: ||F|| = " + ", ".join(f"{r.norm_f:.2e}" for r in rs), f" slope {slope_fit(rs, 'norm_f'):.2f}")
