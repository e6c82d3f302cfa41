"""
Two-qubit entanglement preparation by Lyapunov feedback.

Basis order is ``|11>, |10>, |01>, |00>`` with ``|1> = (1, 0)^T`` and
``|0> = (0, 1)^T``. The target is the Bell state
``|Phi> = (|10> + |01>) / sqrt(2)``, the drift is ``Z(x)I + I(x)Z`` and the
single control Hamiltonian is ``X(x)Y - Y(x)X`` with feedback
``u(rho) = -K tr(i [rho_d, H1] rho)``.
"""

from dataclasses import dataclass

import numpy as np

from .control_model import AffineProtocol, BilinearSystem, vector_field
from .integrators import integrate, tableau
from .linalg_core import commutator, purity

X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
I2 = np.eye(2, dtype=complex)

KET1 = np.array([1, 0], dtype=complex)
KET0 = np.array([0, 1], dtype=complex)

BASIS_LABELS = ("11", "10", "01", "00")


def ket(label):
    """Product ket such as ``ket("10")`` in the fixed basis order."""
    out = np.ones(1, dtype=complex)
    for ch in label:
        out = np.kron(out, KET1 if ch == "1" else KET0)
    return out


def projector(label):
    v = ket(label)
    return np.outer(v, v.conj())


H0 = np.kron(Z, I2) + np.kron(I2, Z)
H1 = np.kron(X, Y) - np.kron(Y, X)
PHI = (ket("10") + ket("01")) / np.sqrt(2)
RHO_D = np.outer(PHI, PHI.conj())


def feedback_matrix(K=1.0):
    """``m`` such that ``u(rho) = tr(m rho)``, i.e. ``m = -K i [rho_d, H1]``."""
    return -K * 1j * commutator(RHO_D, H1)


def twoqubit_system(K=1.0):
    return BilinearSystem(H0, [H1], [AffineProtocol(feedback_matrix(K))])


@dataclass(frozen=True)
class TwoQubitSetup:
    sys: BilinearSystem
    rho_d: np.ndarray
    rho0: np.ndarray
    sigma0: np.ndarray
    K: float
    T: float


def default_setup(K=1.0, T=1.0):
    """``rho0 = |10><10|`` and ``sigma0 = 0.95 |10><10| + 0.05 |00><00|``."""
    if not K > 0:
        raise ValueError("gain K must be positive")
    rho0 = projector("10")
    sigma0 = 0.95 * projector("10") + 0.05 * projector("00")
    return TwoQubitSetup(twoqubit_system(K), RHO_D.copy(), rho0, sigma0, float(K), float(T))


def fidelity_to_target(setup, rho):
    """``tr(rho_d rho)``; accepts a stack of states."""
    return np.real(np.einsum("ij,...ji->...", setup.rho_d, np.asarray(rho)))


def lyapunov_v(setup, rho):
    """``V(rho) = tr((I - rho_d) rho) = 1 - tr(rho_d rho)``; accepts a stack of states."""
    rho = np.asarray(rho)
    tr = np.real(np.trace(rho, axis1=-2, axis2=-1))
    return tr - fidelity_to_target(setup, rho)


def lyapunov_rate(setup, rho):
    """``dV/dt = -K (tr(i [rho_d, H1] rho))^2`` along the closed loop."""
    c = 1j * commutator(setup.rho_d, H1)
    return -setup.K * float(np.real(np.trace(c @ rho))) ** 2


def closed_form_state(t, K=1.0):
    """Exact closed-loop state from ``|10><10|``.

    On ``span{|10>, |01>}`` the Bloch components are ``x = tanh(8Kt)`` and
    ``z = sech(8Kt)``.
    """
    t = np.asarray(t, dtype=float)
    x = np.tanh(8 * K * t)
    z = 1 / np.cosh(8 * K * t)
    out = np.zeros(t.shape + (4, 4), dtype=complex)
    out[..., 1, 1] = (1 + z) / 2
    out[..., 2, 2] = (1 - z) / 2
    out[..., 1, 2] = out[..., 2, 1] = x / 2
    return out


@dataclass(frozen=True)
class Proposition1Report:
    """Diagnostics of the closed loop over a long horizon."""

    times: np.ndarray
    V: np.ndarray
    fidelity: np.ndarray
    u1: np.ndarray
    purity: np.ndarray
    max_v_increase: float
    max_leak: float
    max_population: float
    purity_drift: float
    final_v: float
    v_threshold: float
    tolerance: float = 1e-9
    leak_tolerance: float = 1e-8

    @property
    def checks(self):
        return {
            "V nonincreasing": self.max_v_increase <= self.tolerance,
            "invariant populations": self.max_population <= self.tolerance,
            "support confinement": self.max_leak <= self.leak_tolerance,
            "purity conserved": self.purity_drift <= self.tolerance,
            "final V below threshold": self.final_v <= self.v_threshold,
        }

    @property
    def passed(self):
        return all(self.checks.values())

    def first_failure(self):
        """``(check name, time)`` of the first violated check, or ``None``."""
        for name, ok in self.checks.items():
            if not ok:
                return name, self._failure_time(name)
        return None

    def _failure_time(self, name):
        t = self.times
        if name == "V nonincreasing":
            return float(t[1:][np.argmax(np.diff(self.V))])
        if name == "purity conserved":
            return float(t[np.argmax(np.abs(self.purity - self.purity[0]))])
        return float(t[-1])


def proposition1_trace(setup, T_long, n_steps, *, rho0=None, v_threshold=0.01):
    """
    Integrate the closed loop from ``rho0`` over ``[0, T_long]`` with RK5 and
    check the Lyapunov diagnostics.

    The leak measure is the largest modulus of any matrix entry touching
    ``|11>`` or ``|00>``; the population measure is the largest of
    ``<11|rho|11>`` and ``<00|rho|00>``.
    """
    if not T_long > 0:
        raise ValueError("T_long must be positive")
    rho0 = setup.rho0 if rho0 is None else np.asarray(rho0, dtype=complex)
    states = integrate(tableau(5), vector_field(setup.sys), rho0, T_long / n_steps, int(n_steps), hermitian=True)
    times = np.arange(n_steps + 1) * (T_long / n_steps)
    V = lyapunov_v(setup, states)
    fid = fidelity_to_target(setup, states)
    u1 = np.real(np.einsum("ij,nji->n", setup.sys.protocols[0].m, states)) + setup.sys.protocols[0].c
    pur = purity(states)
    outer = np.zeros((4, 4), dtype=bool)
    outer[[0, 3], :] = True
    outer[:, [0, 3]] = True
    leak = float(np.max(np.abs(states[:, outer])))
    return Proposition1Report(
        times=times,
        V=V,
        fidelity=fid,
        u1=u1,
        purity=pur,
        max_v_increase=float(max(0.0, np.max(np.diff(V)))) if n_steps else 0.0,
        max_leak=leak,
        max_population=float(np.max(np.abs(states[:, [0, 3], [0, 3]]))),
        purity_drift=float(np.max(np.abs(pur - pur[0]))),
        final_v=float(V[-1]),
        v_threshold=v_threshold,
    )
