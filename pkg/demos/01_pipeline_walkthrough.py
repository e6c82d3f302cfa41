"""
Three steps from feedback law to open-loop pulse
================================================

Simulate the closed loop on a coarse grid, freeze the control values into
piecewise-constant pulses, and drive the plant with them from a perturbed
initial state.
"""

import numpy as np

from qcdol import default_setup, step1_simulate, step2_generate_controls, step3_propagate
from qcdol.linalg_core import hs_norm
from qcdol.twoqubit import closed_form_state, fidelity_to_target

setup = default_setup()
sys, rho0, sigma0, T = setup.sys, setup.rho0, setup.sigma0, setup.T
N = 32

# step 1: a fourth-order Runge-Kutta run of the feedback system
theta = step1_simulate(sys, rho0, T, N, 4)

# step 2: sample u(theta_n) on every interval
ctrl = step2_generate_controls(theta, sys)
print("first pulse values:", np.round(ctrl.values[:4, 0], 6))

# step 3: exact propagation with one unitary per interval, no feedback
sigma = step3_propagate(sigma0, sys, ctrl)

# the closed loop for this example has a closed-form trajectory
exact = closed_form_state(np.linspace(0, T, N + 1))
err = hs_norm(sigma - exact)
print(f"||rho(T) - sigma_N(T)|| = {err[-1]:.3e}")
print(f"fidelity of the open-loop state at T: {fidelity_to_target(setup, sigma[-1]):.6f}")
print(f"fidelity of the closed-loop state at T: {fidelity_to_target(setup, exact[-1]):.6f}")
