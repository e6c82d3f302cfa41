"""
Dense complex matrix helpers for small Hilbert spaces.

Matrices are plain ``numpy.ndarray`` objects of dtype ``complex128``. Most
functions also accept stacks of matrices (arrays of shape ``(..., d, d)``).

The real coordinate chart on trace-one Hermitian matrices writes

    rho = sum_{i<d} rho_ii Omega_ii + sum_{i<j} (rho^R_ij E_ij + rho^I_ij F_ij)
          + (1 - sum_{i<d} rho_ii) Omega_dd

with ``E_ij = e_i e_j^T + e_j e_i^T``, ``F_ij = i e_i e_j^T - i e_j e_i^T`` and
``Omega_kk = e_k e_k^T``. Indices exposed to callers are 1-based.
"""

from dataclasses import dataclass

import numpy as np

TOL_HERM = 1e-12
TOL_TRACE = 1e-12
PSD_FLOOR = -1e-10


def _as_matrix(a):
    a = np.asarray(a, dtype=complex)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"expected square matrix, got shape {a.shape}")
    return a


def dagger(a):
    """Conjugate transpose over the last two axes."""
    return np.conj(np.swapaxes(a, -1, -2))


def commutator(a, b):
    """Return ``a @ b - b @ a``."""
    a = _as_matrix(a)
    b = _as_matrix(b)
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a @ b - b @ a


def hs_norm(a):
    """Hilbert-Schmidt (Frobenius) norm ``sqrt(tr(a^dagger a))``.

    Reduces over the last two axes, so a stack of matrices gives an array of
    norms.
    """
    a = np.asarray(a)
    return np.sqrt(np.sum(np.abs(a) ** 2, axis=(-2, -1)))


def hermiticity_error(a):
    """Largest entrywise ``|a - a^dagger|``."""
    a = np.asarray(a)
    return float(np.max(np.abs(a - dagger(a)))) if a.size else 0.0


def is_hermitian(a, tol=TOL_HERM):
    return hermiticity_error(a) <= tol


def hermitize(a):
    return 0.5 * (a + dagger(a))


def unitary_exp(h, t):
    """
    Return ``exp(-i h t)`` for Hermitian ``h``.

    Computed from the Hermitian eigendecomposition ``h = V diag(w) V^dagger``,
    so the result is unitary to round-off for any ``t``.

    Parameters
    ----------
    h : array_like, shape (..., d, d)
        Hermitian matrix or stack of Hermitian matrices.
    t : float
        Evolution time.

    Raises
    ------
    ValueError
        If ``h`` is not Hermitian within ``TOL_HERM`` (scaled by ``max(1, |h|)``).
    """
    h = _as_matrix(h)
    scale = max(1.0, float(np.max(np.abs(h)))) if h.size else 1.0
    if hermiticity_error(h) > TOL_HERM * scale:
        raise ValueError("unitary_exp requires a Hermitian generator")
    w, v = np.linalg.eigh(h)
    phases = np.exp(-1j * t * w)
    return (v * phases[..., None, :]) @ dagger(v)


def unitarity_error(u):
    """Largest HS norm of ``u^dagger u - I`` (over a stack, if given)."""
    u = _as_matrix(u)
    eye = np.eye(u.shape[-1])
    return float(np.max(hs_norm(dagger(u) @ u - eye)))


def conjugate(u, a):
    """Superoperator action ``a -> u a u^dagger``."""
    return u @ a @ dagger(u)


def density_matrix(a, *, psd_floor=PSD_FLOOR, tol_herm=TOL_HERM, tol_trace=TOL_TRACE):
    """
    Validate and return ``a`` as a density matrix.

    Checks Hermiticity, unit trace and that every eigenvalue is at least
    ``psd_floor``. Pass ``psd_floor=None`` to skip the positivity test.
    """
    a = _as_matrix(a)
    if a.ndim != 2:
        raise ValueError("expected a single matrix")
    if a.shape[0] < 2:
        raise ValueError("dimension must be at least 2")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    if hermiticity_error(a) > tol_herm:
        raise ValueError(f"matrix is not Hermitian (error {hermiticity_error(a):.2e})")
    tr = np.trace(a)
    if abs(tr - 1.0) > tol_trace:
        raise ValueError(f"trace {tr} differs from 1")
    if psd_floor is not None:
        lo = np.linalg.eigvalsh(hermitize(a))[0]
        if lo < psd_floor:
            raise ValueError(f"matrix is not positive semidefinite (min eigenvalue {lo:.3e})")
    return a


def purity(rho):
    """``tr(rho^2)`` for Hermitian ``rho`` (stack-aware)."""
    rho = np.asarray(rho)
    return np.real(np.einsum("...ij,...ji->...", rho, rho))


def basis_operator(kind, j, k, dim):
    """
    One of the Hermitian basis matrices used by the coordinate chart.

    Parameters
    ----------
    kind : {"E", "F", "Omega"}
        ``E_jk = e_j e_k^T + e_k e_j^T``, ``F_jk = i e_j e_k^T - i e_k e_j^T``
        (both need ``j < k``) or ``Omega_kk = e_k e_k^T`` (needs ``j == k``).
    j, k : int
        1-based indices.
    dim : int
    """
    if not (1 <= j <= dim and 1 <= k <= dim):
        raise ValueError(f"indices ({j}, {k}) out of range for dimension {dim}")
    out = np.zeros((dim, dim), dtype=complex)
    a, b = j - 1, k - 1
    if kind == "E":
        if not j < k:
            raise ValueError("E_jk requires j < k")
        out[a, b] = out[b, a] = 1.0
    elif kind == "F":
        if not j < k:
            raise ValueError("F_jk requires j < k")
        out[a, b] = 1j
        out[b, a] = -1j
    elif kind in ("Omega", "Ω"):
        if j != k:
            raise ValueError("Omega_kk requires j == k")
        out[a, a] = 1.0
    else:
        raise ValueError(f"unknown basis operator kind {kind!r}")
    return out


def upper_pairs(dim):
    """1-based ``(i, j)`` pairs with ``i < j`` in lexicographic order."""
    return [(i, j) for i in range(1, dim + 1) for j in range(i + 1, dim + 1)]


@dataclass(frozen=True)
class CoordinateVector:
    """Real coordinates of a trace-one Hermitian matrix.

    ``diag`` holds ``rho_ii`` for ``i = 1..d-1``; ``re``/``im`` hold the real and
    imaginary parts of ``rho_ij`` for ``i < j`` in lexicographic order.
    """

    diag: np.ndarray
    re: np.ndarray
    im: np.ndarray

    @property
    def dim(self):
        return len(self.diag) + 1

    def to_array(self):
        """Flatten in chart order: diagonal, then real parts, then imaginary parts."""
        return np.concatenate([self.diag, self.re, self.im])

    @classmethod
    def from_array(cls, values, dim):
        values = np.asarray(values, dtype=float)
        npair = dim * (dim - 1) // 2
        if values.shape != (dim - 1 + 2 * npair,):
            raise ValueError(f"expected {dim * dim - 1} coordinates, got {values.shape}")
        return cls(values[: dim - 1], values[dim - 1 : dim - 1 + npair], values[dim - 1 + npair :])


def to_coords(rho):
    rho = _as_matrix(rho)
    d = rho.shape[0]
    iu = np.triu_indices(d, 1)
    upper = rho[iu]
    return CoordinateVector(np.real(np.diag(rho))[: d - 1].copy(), np.real(upper), np.imag(upper))


def from_coords(c):
    d = c.dim
    rho = np.zeros((d, d), dtype=complex)
    idx = np.arange(d - 1)
    rho[idx, idx] = c.diag
    rho[d - 1, d - 1] = 1.0 - np.sum(c.diag)
    iu = np.triu_indices(d, 1)
    upper = np.asarray(c.re) + 1j * np.asarray(c.im)
    rho[iu] = upper
    rho[iu[1], iu[0]] = np.conj(upper)
    return rho


def random_hermitian(dim, rng, scale=1.0):
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return scale * 0.5 * (g + g.conj().T)


def random_density_matrix(dim, rng, rank=None):
    """Random density matrix ``G G^dagger / tr(G G^dagger)`` with ``G`` of the given rank."""
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    rho = hermitize(rho)
    return rho / np.trace(rho).real
