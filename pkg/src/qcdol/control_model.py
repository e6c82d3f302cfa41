"""
Bilinear closed-loop model ``rho' = -i [H0 + sum_k u_k(rho) H_k, rho]``.

Feedback protocols map a state to a real control amplitude. The shipped
protocol is affine, ``u(rho) = tr(m rho) + c``; anything else goes through
:class:`CallableProtocol`, which needs a gradient in the real coordinate chart
of :mod:`qcdol.linalg_core`.
"""

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .linalg_core import (
    TOL_HERM,
    CoordinateVector,
    hermiticity_error,
    hs_norm,
)


@dataclass(frozen=True)
class AffineProtocol:
    """``u(rho) = tr(m rho) + c`` with Hermitian ``m``."""

    m: np.ndarray
    c: float = 0.0
    _mt: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        m = np.asarray(self.m, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("protocol matrix must be square")
        if hermiticity_error(m) > TOL_HERM * max(1.0, float(np.max(np.abs(m)))):
            raise ValueError("protocol matrix must be Hermitian")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "c", float(self.c))
        # tr(m rho) == sum(m.T * rho)
        object.__setattr__(self, "_mt", np.ascontiguousarray(m.T))

    def value(self, rho):
        return float(np.real(np.sum(self._mt * rho))) + self.c

    def gradient(self, rho=None):
        """Partial derivatives in the coordinate chart (state independent)."""
        m = self.m
        d = m.shape[0]
        iu = np.triu_indices(d, 1)
        diag = np.real(np.diag(m))[: d - 1] - np.real(m[d - 1, d - 1])
        # tr(m E_jk) = 2 Re m_jk and tr(m F_jk) = 2 Im m_jk for Hermitian m
        return CoordinateVector(diag, 2.0 * np.real(m[iu]), 2.0 * np.imag(m[iu]))


@dataclass(frozen=True)
class CallableProtocol:
    """
    User-supplied protocol.

    Parameters
    ----------
    value_fn : callable
        ``rho -> float``.
    gradient_fn : callable
        ``rho -> CoordinateVector`` of partial derivatives with respect to the
        chart coordinates ``(rho_ii, rho^R_ij, rho^I_ij)``.
    """

    value_fn: Callable[[np.ndarray], float]
    gradient_fn: Callable[[np.ndarray], CoordinateVector]

    def value(self, rho):
        return float(self.value_fn(rho))

    def gradient(self, rho):
        return self.gradient_fn(rho)


def constant_protocol(value, dim):
    return AffineProtocol(np.zeros((dim, dim), dtype=complex), value)


@dataclass(frozen=True)
class BilinearSystem:
    """Drift ``h0``, control Hamiltonians and one feedback protocol per control."""

    h0: np.ndarray
    controls: Sequence[np.ndarray]
    protocols: Sequence[object]

    def __post_init__(self):
        h0 = np.asarray(self.h0, dtype=complex)
        controls = tuple(np.asarray(h, dtype=complex) for h in self.controls)
        protocols = tuple(self.protocols)
        if len(controls) == 0:
            raise ValueError("at least one control Hamiltonian is required")
        if len(controls) != len(protocols):
            raise ValueError("need exactly one protocol per control Hamiltonian")
        d = h0.shape[0]
        for h in (h0,) + controls:
            if h.shape != (d, d):
                raise ValueError("all Hamiltonians must share one square shape")
            if hermiticity_error(h) > TOL_HERM * max(1.0, float(np.max(np.abs(h)))):
                raise ValueError("Hamiltonians must be Hermitian")
        for p in protocols:
            if isinstance(p, AffineProtocol) and p.m.shape != (d, d):
                raise ValueError("protocol dimension does not match the system")
        object.__setattr__(self, "h0", h0)
        object.__setattr__(self, "controls", controls)
        object.__setattr__(self, "protocols", protocols)

    @property
    def dim(self):
        return self.h0.shape[0]

    @property
    def n_controls(self):
        return len(self.controls)

    def hamiltonian(self, amplitudes):
        """``H0 + sum_k a_k H_k`` for given control amplitudes."""
        h = self.h0.copy()
        for a, hk in zip(amplitudes, self.controls):
            h += a * hk
        return h


def protocol_value(p, rho):
    return p.value(rho)


def derivative_matrix_from_gradient(grad):
    """
    Assemble the matrix ``D`` with ``D_ii = du/drho_ii`` (``i < d``),
    ``D_dd = 0`` and ``D_jk = (du/drho^R_jk + i du/drho^I_jk) / 2`` for ``j < k``
    (conjugate below the diagonal).
    """
    d = grad.dim
    out = np.zeros((d, d), dtype=complex)
    idx = np.arange(d - 1)
    out[idx, idx] = grad.diag
    iu = np.triu_indices(d, 1)
    upper = 0.5 * (np.asarray(grad.re) + 1j * np.asarray(grad.im))
    out[iu] = upper
    out[iu[1], iu[0]] = np.conj(upper)
    return out


def derivative_matrix(p, rho=None):
    """Derivative matrix ``D_u`` of a protocol at ``rho``.

    For :class:`AffineProtocol` this equals ``m - m_dd I`` and ``rho`` is unused.
    """
    return derivative_matrix_from_gradient(p.gradient(rho))


def total_hamiltonian(sys, rho):
    return sys.hamiltonian([p.value(rho) for p in sys.protocols])


def closed_loop_rhs(sys, rho):
    """``-i [H(rho), rho]`` for the feedback Hamiltonian ``H(rho)``."""
    h = total_hamiltonian(sys, rho)
    return -1j * (h @ rho - rho @ h)


def protocol_time_derivative(sys, p, rho):
    """
    Rate of change of ``p(rho(t))`` along the closed-loop flow of ``sys``.

    Evaluates ``tr(D_p (-i)[H(rho), rho])``.
    """
    d = derivative_matrix(p, rho)
    rate = closed_loop_rhs(sys, rho)
    return float(np.real(np.sum(d.T * rate)))


def hamiltonian_rate(sys, rho):
    """``dH/dt = sum_k (d/dt u_k) H_k`` along the closed-loop flow."""
    h = np.zeros_like(sys.h0)
    for p, hk in zip(sys.protocols, sys.controls):
        h += protocol_time_derivative(sys, p, rho) * hk
    return h


def l1_constant(p, samples=None):
    """
    HS norm of the derivative matrix, maximised over states.

    Affine protocols have a constant derivative matrix, so the value is exact.
    For callable protocols the maximum is taken over ``samples`` and is only a
    lower estimate of the global maximum.
    """
    if isinstance(p, AffineProtocol):
        return float(hs_norm(derivative_matrix(p)))
    if not samples:
        raise ValueError("a callable protocol needs a non-empty state sample set")
    return max(float(hs_norm(derivative_matrix(p, rho))) for rho in samples)


def l0_estimate(p, traj):
    """Largest ``|u(rho)|`` over the states of a trajectory.

    ``traj`` is a :class:`~qcdol.pipeline.ReferenceTrajectory` or any iterable
    of states.
    """
    states = getattr(traj, "states", traj)
    if len(states) == 0:
        raise ValueError("trajectory is empty")
    if isinstance(p, AffineProtocol):
        vals = np.real(np.einsum("ij,nji->n", p.m, np.asarray(states))) + p.c
        return float(np.max(np.abs(vals)))
    return max(abs(p.value(rho)) for rho in states)


def l0_cap(p):
    """Cauchy-Schwarz cap ``|tr(m rho) + c| <= ||m|| + |c|`` over density matrices."""
    if not isinstance(p, AffineProtocol):
        raise TypeError("analytic cap is only available for affine protocols")
    return float(hs_norm(p.m)) + abs(p.c)


def chain_rule_rate(sys, p, rho, grad=None):
    """Rate of ``p`` along the flow via the coordinate chain rule.

    Sums ``du/dx_i * dx_i/dt`` over the chart coordinates, with ``dx/dt`` read
    from the coordinates of the closed-loop right-hand side. ``grad`` defaults
    to the protocol's own gradient.
    """
    grad = p.gradient(rho) if grad is None else grad
    rate = closed_loop_rhs(sys, rho)
    d = sys.dim
    iu = np.triu_indices(d, 1)
    rdiag = np.real(np.diag(rate))[: d - 1]
    rup = rate[iu]
    return float(
        np.dot(grad.diag, rdiag) + np.dot(grad.re, np.real(rup)) + np.dot(grad.im, np.imag(rup))
    )



def vector_field(sys):
    """
    Closure ``rho -> closed_loop_rhs(sys, rho)`` specialised for speed.

    Affine protocols are evaluated through precomputed transposes; other
    protocols fall back to :func:`closed_loop_rhs`.
    """
    if not all(isinstance(p, AffineProtocol) for p in sys.protocols):
        return lambda rho: closed_loop_rhs(sys, rho)
    h0 = sys.h0
    terms = [(p._mt, p.c, hk) for p, hk in zip(sys.protocols, sys.controls)]

    def rhs(rho):
        h = h0
        for mt, c, hk in terms:
            h = h + ((mt * rho).sum().real + c) * hk
        return -1j * (h @ rho - rho @ h)

    return rhs


def protocol_values(sys, states):
    """Control amplitudes ``u_k(rho)`` for a stack of states, shape ``(n, M)``."""
    states = np.asarray(states)
    cols = []
    for p in sys.protocols:
        if isinstance(p, AffineProtocol):
            cols.append(np.real(np.einsum("ij,nji->n", p.m, states)) + p.c)
        else:
            cols.append(np.array([p.value(r) for r in states]))
    return np.stack(cols, axis=1)


def protocol_rates(sys, states, values=None):
    """Time derivatives of ``u_k`` along the flow for a stack of states, shape ``(n, M)``."""
    states = np.asarray(states)
    values = protocol_values(sys, states) if values is None else values
    h = sys.h0 + np.einsum("nk,kij->nij", values, np.asarray(sys.controls))
    rate = -1j * (h @ states - states @ h)
    cols = []
    for p in sys.protocols:
        if isinstance(p, AffineProtocol):
            d = derivative_matrix(p)
            cols.append(np.real(np.einsum("ij,nji->n", d, rate)))
        else:
            cols.append(
                np.array([np.real(np.sum(derivative_matrix(p, r).T * q)) for r, q in zip(states, rate)])
            )
    return np.stack(cols, axis=1)
