"""
Fixed-step explicit Runge-Kutta methods of orders 1 to 5.

The tableaux are the textbook ones: explicit Euler, Heun, Kutta's third-order
method, the classical fourth-order method and Butcher's six-stage fifth-order
method.
"""

from dataclasses import dataclass

import numpy as np

from .control_model import vector_field
from .errors import DivergenceError
from .linalg_core import hermitize

TABLEAU_TOL = 1e-14


@dataclass(frozen=True)
class ButcherTableau:
    order: int
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float))
        object.__setattr__(self, "c", np.asarray(self.c, dtype=float))

    @property
    def stages(self):
        return len(self.b)

    def problems(self):
        """List of violated consistency conditions (empty when valid)."""
        s = self.stages
        out = []
        if self.a.shape != (s, s) or self.c.shape != (s,):
            return [f"inconsistent shapes a{self.a.shape}, b({s},), c{self.c.shape}"]
        if abs(np.sum(self.b) - 1.0) > TABLEAU_TOL:
            out.append(f"weights sum to {np.sum(self.b)!r}, not 1")
        rows = np.sum(self.a, axis=1)
        if np.max(np.abs(rows - self.c)) > TABLEAU_TOL:
            out.append("row sums of a differ from the nodes c")
        if np.any(np.triu(self.a) != 0.0):
            out.append("a is not strictly lower triangular")
        return out

    def validate(self):
        problems = self.problems()
        if problems:
            raise ValueError(f"invalid RK{self.order} tableau: " + "; ".join(problems))
        return self


def _lower(rows, s):
    a = np.zeros((s, s))
    for i, row in enumerate(rows, start=1):
        a[i, : len(row)] = row
    return a


_TABLEAUX = {
    1: ButcherTableau(1, np.zeros((1, 1)), [1.0], [0.0]),
    2: ButcherTableau(2, _lower([[1.0]], 2), [0.5, 0.5], [0.0, 1.0]),
    3: ButcherTableau(3, _lower([[0.5], [-1.0, 2.0]], 3), [1 / 6, 2 / 3, 1 / 6], [0.0, 0.5, 1.0]),
    4: ButcherTableau(
        4, _lower([[0.5], [0.0, 0.5], [0.0, 0.0, 1.0]], 4), [1 / 6, 1 / 3, 1 / 3, 1 / 6], [0.0, 0.5, 0.5, 1.0]
    ),
    5: ButcherTableau(
        5,
        _lower(
            [
                [1 / 4],
                [1 / 8, 1 / 8],
                [0.0, -1 / 2, 1.0],
                [3 / 16, 0.0, 0.0, 9 / 16],
                [-3 / 7, 2 / 7, 12 / 7, -12 / 7, 8 / 7],
            ],
            6,
        ),
        [7 / 90, 0.0, 32 / 90, 12 / 90, 32 / 90, 7 / 90],
        [0.0, 1 / 4, 1 / 4, 1 / 2, 3 / 4, 1.0],
    ),
}


def tableau(order):
    """Return the fixed tableau for ``order`` in 1..5."""
    try:
        return _TABLEAUX[order]
    except KeyError:
        raise ValueError(f"unsupported Runge-Kutta order {order!r}; expected 1..5") from None


def _coefficients(tab):
    # Drop zero entries once so the stage loop skips them.
    rows = [[(j, float(tab.a[i, j])) for j in range(i) if tab.a[i, j] != 0.0] for i in range(tab.stages)]
    weights = [(i, float(w)) for i, w in enumerate(tab.b) if w != 0.0]
    return rows, weights


def rk_step(tab, f, y, h):
    """One explicit RK step of size ``h`` for the autonomous ODE ``y' = f(y)``."""
    rows, weights = _coefficients(tab)
    return _step(rows, weights, f, y, h)


def _step(rows, weights, f, y, h):
    k = []
    for row in rows:
        yi = y
        for j, aij in row:
            yi = yi + (h * aij) * k[j]
        k.append(f(yi))
    out = y
    for i, w in weights:
        out = out + (h * w) * k[i]
    return out


def integrate(tab, f, y0, h, n_steps, *, hermitian=False):
    """
    March ``n_steps`` fixed steps from ``y0``; returns all ``n_steps + 1`` states.

    With ``hermitian=True`` every new state is replaced by ``(y + y^dagger) / 2``.

    Raises
    ------
    DivergenceError
        When a state stops being finite; ``err.step`` is the offending index.
    """
    rows, weights = _coefficients(tab)
    y0 = np.asarray(y0)
    out = np.empty((n_steps + 1,) + y0.shape, dtype=np.result_type(y0, complex))
    out[0] = y0
    y = out[0]
    for n in range(n_steps):
        y = _step(rows, weights, f, y, h)
        if hermitian:
            y = hermitize(y)
        if not np.all(np.isfinite(y)):
            raise DivergenceError(n + 1)
        out[n + 1] = y
    return out


@dataclass(frozen=True)
class ThetaSequence:
    """Closed-loop simulation samples ``theta_0..theta_N`` on ``t_n = n T / N``."""

    n_grid: int
    horizon: float
    points: np.ndarray

    @property
    def step(self):
        return self.horizon / self.n_grid

    @property
    def times(self):
        return np.arange(self.n_grid + 1) * self.step


def step1_simulate(sys, rho0, T, N, order):
    """
    Simulate the closed loop on ``N`` uniform steps over ``[0, T]``.

    ``order`` is an integer 1..5 or a :class:`ButcherTableau`. The state is
    re-symmetrised after each step; positivity is not enforced.
    """
    if not T > 0:
        raise ValueError("horizon T must be positive")
    if int(N) != N or N < 1:
        raise ValueError("grid count N must be a positive integer")
    tab = order if isinstance(order, ButcherTableau) else tableau(order)
    tab.validate()
    rho0 = np.asarray(rho0, dtype=complex)
    pts = integrate(tab, vector_field(sys), rho0, T / N, int(N), hermitian=True)
    pts[0] = rho0
    return ThetaSequence(int(N), float(T), pts)
