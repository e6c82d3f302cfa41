"""
Open-loop execution of simulated feedback pulses, and the error bookkeeping.

The closed-loop samples ``theta_n`` are frozen into piecewise-constant pulses
(``step2_generate_controls``), which then drive the plant exactly through
one unitary per interval (``step3_propagate``). Errors are measured against a
:class:`ReferenceTrajectory`, a finely sampled closed-loop solution that also
carries the propagator of the frozen time-dependent Hamiltonian
``H0 + sum_k g_k(t) H_k`` with ``g_k(t) = u_k(rho(t))``.
"""

from dataclasses import dataclass, field

import numpy as np

from .control_model import protocol_rates, protocol_values, vector_field
from .errors import GridError, ReferenceAccuracyError
from .integrators import integrate, step1_simulate, tableau
from .linalg_core import conjugate, dagger, hs_norm, unitary_exp

TOL_REF = 1e-9
OVERSAMPLE = 64


@dataclass(frozen=True)
class PiecewiseControl:
    """Control amplitude ``values[n, k]`` held on ``[t_n, t_{n+1})``."""

    n_grid: int
    horizon: float
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != self.n_grid:
            raise ValueError(f"expected values of shape ({self.n_grid}, M), got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("control values must be finite")
        object.__setattr__(self, "values", values)

    @property
    def step(self):
        return self.horizon / self.n_grid


def step2_generate_controls(theta, sys):
    """Pulse amplitudes ``u_k(theta_n)`` for ``n = 0..N-1`` (``theta_N`` is not used)."""
    vals = protocol_values(sys, theta.points[: theta.n_grid])
    return PiecewiseControl(theta.n_grid, theta.horizon, vals)


def interval_unitaries(sys, ctrl):
    """``exp(-i h (H0 + sum_k values[n, k] H_k))`` for every interval, shape ``(N, d, d)``."""
    hams = sys.h0 + np.einsum("nk,kij->nij", ctrl.values, np.asarray(sys.controls))
    return unitary_exp(hams, ctrl.step)


def step3_propagate(sigma0, sys, ctrl, unitaries=None):
    """
    Evolve the plant under the piecewise-constant pulses.

    Returns an array of shape ``(N + 1, d, d)`` holding ``sigma_N(t_n)``.
    """
    sigma0 = np.asarray(sigma0, dtype=complex)
    if sigma0.shape != sys.h0.shape:
        raise ValueError("initial state does not match the system dimension")
    us = interval_unitaries(sys, ctrl) if unitaries is None else unitaries
    out = np.empty((ctrl.n_grid + 1,) + sigma0.shape, dtype=complex)
    out[0] = sigma0
    s = sigma0
    for n, u in enumerate(us):
        s = u @ s @ u.conj().T
        out[n + 1] = s
    return out


@dataclass(frozen=True)
class ReferenceTrajectory:
    """
    High-accuracy closed-loop solution on ``n_ref`` uniform steps.

    Attributes
    ----------
    states : ndarray, shape (n_ref + 1, d, d)
        ``rho(t_j)``.
    controls : ndarray, shape (n_ref + 1, M)
        ``g_k(t_j) = u_k(rho(t_j))``.
    control_rates : ndarray, shape (n_ref + 1, M)
        Time derivatives of ``g_k`` at the grid points.
    step_unitaries : ndarray, shape (n_ref, d, d)
        Propagator of the frozen Hamiltonian across each substep.
    cumulative : ndarray, shape (n_ref + 1, d, d)
        ``U[t_j, 0]``, the ordered product of the substep unitaries, refined
        by :func:`polar_refine`.
    est_error : float
        Richardson estimate of the state error (``nan`` when not validated).
    h0, hk : ndarray
        Drift and stacked control Hamiltonians of the system.
    """

    n_ref: int
    horizon: float
    states: np.ndarray
    controls: np.ndarray
    control_rates: np.ndarray
    step_unitaries: np.ndarray
    cumulative: np.ndarray
    est_error: float
    h0: np.ndarray = field(repr=False)
    hk: np.ndarray = field(repr=False)

    @property
    def step(self):
        return self.horizon / self.n_ref

    @property
    def times(self):
        return np.arange(self.n_ref + 1) * self.step

    @property
    def rho0(self):
        return self.states[0]

    def index_of(self, t):
        """Grid index of time ``t``; raises :class:`GridError` off the grid."""
        x = t / self.step
        j = int(round(x))
        if abs(x - j) > 1e-9 or not 0 <= j <= self.n_ref:
            raise GridError(f"time {t!r} is not on the reference grid (step {self.step!r})")
        return j

    def stride(self, n_grid):
        """Reference substeps per coarse interval for an ``n_grid``-interval grid."""
        if n_grid < 1 or self.n_ref % n_grid:
            raise GridError(f"reference grid ({self.n_ref}) is not divisible by N={n_grid}")
        return self.n_ref // n_grid

    def hamiltonians(self, idx=slice(None)):
        """Frozen Hamiltonians ``H0 + sum_k g_k H_k`` at grid points."""
        return self.h0 + np.einsum("nk,kij->nij", np.atleast_2d(self.controls[idx]), self.hk)

    def hamiltonian_rates(self, idx=slice(None)):
        return np.einsum("nk,kij->nij", np.atleast_2d(self.control_rates[idx]), self.hk)


def polar_refine(u):
    """
    One Newton-Schulz step ``U (3I - U^dagger U) / 2`` towards the nearest unitary.

    Squares the unitarity defect, which otherwise random-walks upward over
    long products of step unitaries.
    """
    eye = np.eye(u.shape[-1])
    return 0.5 * u @ (3 * eye - dagger(u) @ u)


def _hermite_midpoints(g, gdot, h):
    # Cubic Hermite interpolation at the interval midpoints.
    return 0.5 * (g[:-1] + g[1:]) + (h / 8.0) * (gdot[:-1] - gdot[1:])


def reference_trajectory(sys, rho0, T, n_ref, *, tol_ref=TOL_REF, validate=True):
    """
    Build the reference closed-loop solution with RK5 on ``n_ref`` steps.

    The state error is estimated by rerunning on ``n_ref / 2`` steps and taking
    the Richardson estimate ``max_j |rho_fine - rho_coarse| / (2^5 - 1)`` at the
    shared points. Substep unitaries use the exponential midpoint rule with the
    midpoint controls obtained by cubic Hermite interpolation of ``g_k`` and its
    derivative.

    Raises
    ------
    ReferenceAccuracyError
        When the error estimate exceeds ``tol_ref``.
    """
    if not T > 0:
        raise ValueError("horizon T must be positive")
    n_ref = int(n_ref)
    rho0 = np.asarray(rho0, dtype=complex)
    rk5 = tableau(5)
    h = T / n_ref
    f = vector_field(sys)
    states = integrate(rk5, f, rho0, h, n_ref, hermitian=True)
    states[0] = rho0

    est = float("nan")
    if validate:
        if n_ref % 2:
            raise ValueError("validation needs an even n_ref")
        coarse = integrate(rk5, f, rho0, 2 * h, n_ref // 2, hermitian=True)
        diff = float(np.max(hs_norm(states[::2] - coarse)))
        est = diff / (2**5 - 1)
        if est > tol_ref:
            raise ReferenceAccuracyError(est, tol_ref)

    g = protocol_values(sys, states)
    gdot = protocol_rates(sys, states, g)
    g_mid = _hermite_midpoints(g, gdot, h)
    hk = np.asarray(sys.controls)
    steps = unitary_exp(sys.h0 + np.einsum("nk,kij->nij", g_mid, hk), h)

    cumulative = np.empty_like(states)
    w = np.eye(sys.dim, dtype=complex)
    cumulative[0] = w
    for j, u in enumerate(steps):
        w = u @ w
        cumulative[j + 1] = w
    cumulative = polar_refine(cumulative)

    return ReferenceTrajectory(n_ref, float(T), states, g, gdot, steps, cumulative, est, sys.h0, hk)


@dataclass(frozen=True)
class Propagator:
    """Unitary ``u`` implementing ``A -> u A u^dagger`` from ``from_time`` to ``to_time``."""

    u: np.ndarray
    from_time: float
    to_time: float

    def apply(self, a):
        return conjugate(self.u, a)

    def __call__(self, a):
        return self.apply(a)


def propagator_matrix(ref, j, i):
    """Unitary of ``U[t_j, t_i]`` from grid indices (``i <= j``)."""
    if i == 0:
        return ref.cumulative[j]
    return ref.cumulative[j] @ dagger(ref.cumulative[i])


def propagator(ref, t, s):
    """State transition map ``U[t, s]`` of the frozen linear system, ``s <= t``."""
    j, i = ref.index_of(t), ref.index_of(s)
    if i > j:
        raise GridError("propagator requires s <= t")
    return Propagator(propagator_matrix(ref, j, i), float(s), float(t))


def hamiltonian_error(ref, ctrl, sys, n):
    """``E(N, n) = sum_k (g_k(t_n) - ctrl.values[n, k]) H_k``."""
    if abs(ctrl.horizon - ref.horizon) > 1e-12 * max(1.0, ref.horizon):
        raise GridError("control horizon differs from the reference horizon")
    if not 0 <= n < ctrl.n_grid:
        raise GridError(f"interval index {n} out of range")
    j = n * ref.stride(ctrl.n_grid)
    diff = ref.controls[j] - ctrl.values[n]
    return np.einsum("k,kij->ij", diff, np.asarray(sys.controls))


def hamiltonian_errors(ref, ctrl, sys):
    """All ``E(N, n)`` for ``n = 0..N-1`` as a stack."""
    if abs(ctrl.horizon - ref.horizon) > 1e-12 * max(1.0, ref.horizon):
        raise GridError("control horizon differs from the reference horizon")
    k = ref.stride(ctrl.n_grid)
    diff = ref.controls[: ref.n_ref : k] - ctrl.values
    return np.einsum("nk,kij->nij", diff, np.asarray(sys.controls))


def error_e(ref, sigma, t):
    """``e_N(t) = rho(t) - sigma_N(t)`` at a time on both grids."""
    n_grid = len(sigma) - 1
    k = ref.stride(n_grid)
    j = ref.index_of(t)
    if j % k:
        raise GridError(f"time {t!r} is not on the N={n_grid} grid")
    return ref.states[j] - sigma[j // k]


def error_f(ref, sigma, rho0, sigma0, T):
    """``F(N, T) = e_N(T) - U[T, 0](rho0 - sigma0)``."""
    u = propagator(ref, T, 0.0)
    return error_e(ref, sigma, T) - u.apply(np.asarray(rho0) - np.asarray(sigma0))


@dataclass(frozen=True)
class PipelineRun:
    """Everything produced by one (method, N) execution of steps 1 to 3."""

    theta: object
    controls: PiecewiseControl
    unitaries: np.ndarray
    sigma: np.ndarray


def run_pipeline(sys, rho0, sigma0, T, N, order):
    theta = step1_simulate(sys, rho0, T, N, order)
    ctrl = step2_generate_controls(theta, sys)
    us = interval_unitaries(sys, ctrl)
    sigma = step3_propagate(sigma0, sys, ctrl, unitaries=us)
    return PipelineRun(theta, ctrl, us, sigma)
