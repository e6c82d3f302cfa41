"""
Lyapunov function along the feedback trajectory
===============================================

Track V = tr(Pi_d rho) for the Bell-state preparation loop. It never
increases, the state stays on span{|10>, |01>}, and V falls below 0.01
shortly before t = 0.29.
"""

import numpy as np

from qcdol import default_setup, proposition1_trace

setup = default_setup()
rep = proposition1_trace(setup, 0.29, 2900)

for t, v, u in zip(rep.times[::290], rep.V[::290], rep.u1[::290]):
    print(f"t = {t:5.3f}   V = {v:.6f}   u1 = {u:+.6f}")

# analytic check: V(t) = (1 - tanh 8t) / 2 for K = 1
print(f"\nmax |V - (1 - tanh 8t)/2| = {np.max(np.abs(rep.V - (1 - np.tanh(8 * rep.times)) / 2)):.2e}")
print("checks:", rep.checks)
