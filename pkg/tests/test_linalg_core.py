import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qcdol.linalg_core import (
    CoordinateVector,
    basis_operator,
    commutator,
    conjugate,
    dagger,
    density_matrix,
    from_coords,
    hermiticity_error,
    hs_norm,
    purity,
    random_density_matrix,
    random_hermitian,
    to_coords,
    unitarity_error,
    unitary_exp,
    upper_pairs,
)
from qcdol.twoqubit import H1, RHO_D, X, Y, Z, default_setup


def seeds():
    return st.integers(min_value=0, max_value=2**32 - 1)


def dims():
    return st.integers(min_value=2, max_value=6)


# commutator


def test_commutator_self_is_zero(rng):
    a = random_hermitian(4, rng)
    assert np.array_equal(commutator(a, a), np.zeros((4, 4)))


def test_commutator_pauli():
    np.testing.assert_allclose(commutator(Z, X), 2j * Y, atol=0)


def test_commutator_bell_restriction():
    # span{|10>, |01>} sits at indices 1, 2 of the basis
    c = commutator(RHO_D, H1)
    np.testing.assert_allclose(c[1:3, 1:3], np.diag([-2j, 2j]), atol=1e-15)


def test_commutator_dimension_mismatch():
    with pytest.raises(ValueError):
        commutator(np.eye(2), np.eye(3))


@settings(max_examples=50, deadline=None)
@given(seeds(), dims())
def test_commutator_antisymmetric_bilinear_bounded(seed, d):
    rng = np.random.default_rng(seed)
    a, b, c = (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)) for _ in range(3))
    alpha, beta = rng.normal(size=2) + 1j * rng.normal(size=2)
    np.testing.assert_allclose(commutator(a, b), -commutator(b, a), atol=1e-12)
    np.testing.assert_allclose(
        commutator(alpha * a + beta * c, b), alpha * commutator(a, b) + beta * commutator(c, b), atol=1e-11
    )
    assert hs_norm(commutator(a, b)) <= 2 * hs_norm(a) * hs_norm(b) * (1 + 1e-12)


# hs_norm


def test_hs_norm_examples(setup):
    assert hs_norm(np.zeros((3, 3))) == 0.0
    assert hs_norm(np.eye(4)) == pytest.approx(2.0, abs=1e-15)
    assert hs_norm(setup.rho0 - setup.sigma0) == pytest.approx(0.05 * np.sqrt(2), abs=1e-15)


def test_hs_norm_stack(rng):
    a = rng.normal(size=(5, 3, 3))
    np.testing.assert_allclose(hs_norm(a), [np.linalg.norm(m, "fro") for m in a], rtol=1e-14)


# unitary_exp


def test_unitary_exp_zero_time(rng):
    np.testing.assert_allclose(unitary_exp(random_hermitian(4, rng), 0.0), np.eye(4), atol=1e-15)


def test_unitary_exp_z_pi():
    np.testing.assert_allclose(unitary_exp(Z, np.pi), -np.eye(2), atol=1e-15)


def test_unitary_exp_x_half_pi():
    # exp(-i theta X) = cos(theta) I - i sin(theta) X
    np.testing.assert_allclose(unitary_exp(X, np.pi / 2), -1j * X, atol=1e-15)


def test_unitary_exp_rejects_non_hermitian():
    with pytest.raises(ValueError):
        unitary_exp(np.array([[0, 1], [0, 0]], dtype=complex), 1.0)


def test_unitary_exp_matches_series(rng):
    # truncated Taylor series as an independent oracle at small |h t|
    h = random_hermitian(4, rng, scale=0.1)
    t = 0.3
    series = np.eye(4, dtype=complex)
    term = np.eye(4, dtype=complex)
    for k in range(1, 30):
        term = term @ (-1j * t * h) / k
        series = series + term
    np.testing.assert_allclose(unitary_exp(h, t), series, atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(seeds(), dims(), st.floats(min_value=-20, max_value=20))
def test_unitary_exp_properties(seed, d, t):
    rng = np.random.default_rng(seed)
    h = random_hermitian(d, rng)
    u = unitary_exp(h, t)
    assert unitarity_error(u) <= 1e-12
    np.testing.assert_allclose(u @ unitary_exp(h, -t), np.eye(d), atol=1e-12)
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    assert hs_norm(conjugate(u, a)) == pytest.approx(hs_norm(a), abs=1e-12 * max(1.0, hs_norm(a)))


# density matrices


def test_density_matrix_validation():
    density_matrix(np.eye(3) / 3)
    with pytest.raises(ValueError):
        density_matrix(np.eye(3))
    with pytest.raises(ValueError):
        density_matrix(np.diag([1.5, -0.5]))
    with pytest.raises(ValueError):
        density_matrix(np.array([[0.5, 0.1], [0.2, 0.5]]))
    with pytest.raises(ValueError):
        density_matrix(np.array([[1.0]]))


def test_default_states_valid(setup):
    density_matrix(setup.rho0)
    density_matrix(setup.sigma0)
    assert purity(RHO_D) == pytest.approx(1.0, abs=1e-12)


# basis operators


def test_basis_operators_dim2():
    np.testing.assert_array_equal(basis_operator("Omega", 1, 1, 2), np.diag([1, 0]))
    np.testing.assert_array_equal(basis_operator("E", 1, 2, 2), X)
    np.testing.assert_array_equal(basis_operator("F", 1, 2, 2), -Y)


@pytest.mark.parametrize("args", [("E", 2, 1, 3), ("F", 1, 1, 3), ("Omega", 1, 2, 3), ("E", 0, 2, 3), ("E", 1, 4, 3), ("G", 1, 2, 3)])
def test_basis_operator_bad_indices(args):
    with pytest.raises(ValueError):
        basis_operator(*args)


def test_basis_operator_norms():
    for j, k in upper_pairs(4):
        for kind in "EF":
            b = basis_operator(kind, j, k, 4)
            assert hermiticity_error(b) == 0.0
            assert hs_norm(b) == pytest.approx(np.sqrt(2), abs=1e-15)
    assert hs_norm(basis_operator("Omega", 3, 3, 4)) == 1.0


# coordinate chart


def test_coords_maximally_mixed():
    c = to_coords(np.eye(4) / 4)
    np.testing.assert_allclose(c.diag, [0.25] * 3)
    assert not np.any(c.re) and not np.any(c.im)


def test_coords_bell_target():
    c = to_coords(RHO_D)
    np.testing.assert_allclose(c.diag, [0, 0.5, 0.5], atol=1e-15)
    pairs = upper_pairs(4)
    expected = np.zeros(len(pairs))
    expected[pairs.index((2, 3))] = 0.5
    np.testing.assert_allclose(c.re, expected, atol=1e-15)
    np.testing.assert_allclose(c.im, 0, atol=1e-15)


def test_coords_expansion_matches_basis(rng):
    # rebuild from the E / F / Omega expansion as an independent path
    rho = random_density_matrix(4, rng)
    c = to_coords(rho)
    out = (1 - np.sum(c.diag)) * basis_operator("Omega", 4, 4, 4)
    for i, x in enumerate(c.diag, start=1):
        out = out + x * basis_operator("Omega", i, i, 4)
    for (j, k), r, m in zip(upper_pairs(4), c.re, c.im):
        out = out + r * basis_operator("E", j, k, 4) + m * basis_operator("F", j, k, 4)
    np.testing.assert_allclose(out, rho, atol=1e-15)


def test_coords_round_trip_many(rng):
    for _ in range(100):
        rho = random_density_matrix(4, rng)
        np.testing.assert_allclose(from_coords(to_coords(rho)), rho, atol=1e-14)


@settings(max_examples=50, deadline=None)
@given(seeds(), dims())
def test_coords_inverse_pair(seed, d):
    rng = np.random.default_rng(seed)
    vals = rng.normal(size=d * d - 1)
    c = CoordinateVector.from_array(vals, d)
    np.testing.assert_allclose(to_coords(from_coords(c)).to_array(), vals, atol=1e-14)
    rho = from_coords(c)
    assert hermiticity_error(rho) == 0.0
    assert np.trace(rho).real == pytest.approx(1.0, abs=1e-14)


def test_coordinate_vector_bad_length():
    with pytest.raises(ValueError):
        CoordinateVector.from_array(np.zeros(5), 3)


def test_dagger_stack(rng):
    a = rng.normal(size=(2, 3, 3)) + 1j * rng.normal(size=(2, 3, 3))
    np.testing.assert_array_equal(dagger(a)[1], a[1].conj().T)


def test_default_setup_sigma_spectrum():
    s = default_setup()
    np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(s.sigma0)), [0, 0, 0.05, 0.95], atol=1e-15)
